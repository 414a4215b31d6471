#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_set>

#include "gridledger/tem/distributed.hpp"

namespace gridledger::tem {

namespace {

using chain::NodeId;

// A home: replicates the ledger from announced blocks, solves its ULT
// whenever the contract opens a new iteration and submits the result.
class UserProcess final : public netsim::Process {
 public:
  UserProcess(NodeId id, int n, const scenario::Scenario& s, double qp_tol,
              std::shared_ptr<const chain::ConsensusConfig> cfg, std::int64_t resend_us)
      : state_(chain::make_node(id, chain::Role::Normal, *cfg)),
        cfg_(std::move(cfg)),
        agent_(s, n, qp_tol),
        s_(&s),
        n_(n),
        resend_us_(resend_us) {}

  NodeId id() const override { return state_.id; }
  const chain::NodeState& node() const override { return state_; }
  const UserAgent& agent() const { return agent_; }
  bool done() const { return finalized_ && pending_.empty(); }

  void start(std::int64_t, chain::Outbox& out) override {
    act(out);
    arm_resend(out);
  }

  void receive(const chain::Message& m, std::int64_t now_us, chain::Outbox& out) override {
    if (m.type == chain::MsgType::Timeout) {
      if (m.timer != chain::TimerKind::Resend) return;
      prune();
      if (!pending_.empty()) {
        send_to_validators(pending_, out);
        chain::Message sync;
        sync.type = chain::MsgType::SyncRequest;
        sync.height = state_.height;
        const auto [a, b] = cfg_->announcers(std::size_t(n_));
        for (NodeId v : {a, b}) {
          sync.to = v;
          sync.from = state_.id;
          out.push_back({sync, 0});
          if (a == b) break;
        }
      }
      if (!done()) arm_resend(out);
      return;
    }
    out = chain::step(state_, m, now_us, *cfg_);
    act(out);
  }

 private:
  void arm_resend(chain::Outbox& out) const {
    chain::Message t;
    t.type = chain::MsgType::Timeout;
    t.from = t.to = state_.id;
    t.timer = chain::TimerKind::Resend;
    out.push_back({t, resend_us_});
  }

  void prune() {
    std::erase_if(pending_,
                  [&](const chain::Transaction& tx) { return state_.committed_txs.contains(chain::tx_digest(tx)); });
  }

  void send_to_validators(const std::vector<chain::Transaction>& txs, chain::Outbox& out) const {
    chain::Message m;
    m.type = chain::MsgType::ClientTx;
    m.from = state_.id;
    m.height = state_.height;
    m.txs = txs;
    for (NodeId v : cfg_->validators) {
      m.to = v;
      out.push_back({m, 0});
    }
  }

  void submit(std::vector<chain::Transaction> txs, chain::Outbox& out) {
    if (txs.empty()) return;
    send_to_validators(txs, out);
    pending_.insert(pending_.end(), txs.begin(), txs.end());
  }

  chain::Transaction signed_tx(chain::TxPayload p) {
    return chain::make_signed(std::move(p), state_.id, ++nonce_, *cfg_->signer);
  }

  void act(chain::Outbox& out) {
    prune();
    const chain::ContractState& cs = state_.contract;
    if (!cs.closed && cs.dual.k > last_k_) {
      last_k_ = cs.dual.k;
      chain::HorizontalTrade h;
      h.user = std::uint32_t(n_);
      h.k = std::uint64_t(cs.dual.k);
      h.slice = agent_.solve(chain::reveal(cs));
      submit({signed_tx(std::move(h))}, out);
    } else if (cs.closed && !finalized_) {
      finalized_ = true;
      std::vector<chain::Transaction> txs;
      if (agent_.has_solution()) {
        const energy::Schedule sch = agent_.schedule();
        txs.push_back(signed_tx(chain::VerticalTrade{std::uint32_t(n_), sch.feed_in, sch.demand_response}));
      }
      // Pay every peer for the energy it sold us, priced at p_T.
      for (int m = 0; m < s_->num_users(); ++m) {
        if (m == n_) continue;
        double value = 0.0;
        for (int t = 0; t < s_->horizon(); ++t) value += s_->prices.trading[t] * cs.dual.e_hat(m, n_, t);
        const std::int64_t amount = std::llround(chain::kMicroTokens * value);
        if (amount > 0) txs.push_back(signed_tx(chain::TokenTransfer{state_.id, cfg_->contract.users[m], amount}));
      }
      submit(std::move(txs), out);
    }
  }

  chain::NodeState state_;
  std::shared_ptr<const chain::ConsensusConfig> cfg_;
  UserAgent agent_;
  const scenario::Scenario* s_;
  int n_;
  std::int64_t resend_us_;
  std::uint64_t nonce_ = 0;
  int last_k_ = 0;
  bool finalized_ = false;
  std::vector<chain::Transaction> pending_;
};

// Rebuilds the dual-state trajectory from ledger contents alone, using the
// same update as the in-process driver.
std::vector<std::string> replay_offchain(const std::vector<chain::Block>& ledger, int N, int T,
                                         const AdmmParams& params) {
  std::vector<std::string> digests;
  DualState d = DualState::zeros(N, T, params.rho.at(1));
  std::vector<std::uint8_t> seen(N, 0);
  for (const auto& b : ledger)
    for (const auto& tx : b.txs) {
      if (const auto* h = std::get_if<chain::HorizontalTrade>(&tx.payload)) {
        if (h->k == std::uint64_t(d.k) && h->user < std::uint32_t(N) && !seen[h->user]) {
          d.e.set_slice(int(h->user), h->slice);
          seen[h->user] = 1;
        }
      } else if (const auto* c = std::get_if<chain::SctCompute>(&tx.payload)) {
        if (c->k != std::uint64_t(d.k) || !std::all_of(seen.begin(), seen.end(), [](auto v) { return v != 0; }))
          continue;
        d = sct_step(d);
        d.k += 1;
        d.rho = params.rho.at(d.k);
        digests.push_back(dual_digest(d));
        std::fill(seen.begin(), seen.end(), 0);
      }
    }
  return digests;
}

bool same_prefix(const std::vector<chain::Block>& a, const std::vector<chain::Block>& b) {
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i)
    if (a[i].digest() != b[i].digest()) return false;
  return true;
}

}  // namespace

ChainRun run_distributed_chain(const scenario::Scenario& s, const AdmmParams& params, const ChainOptions& options,
                               double qp_tol) {
  validate(params);
  if (options.validators < 1) throw std::invalid_argument("chain transport needs at least one validator");
  const int V = options.validators, N = s.num_users(), T = s.horizon();

  auto cfg = std::make_shared<chain::ConsensusConfig>();
  for (int v = 0; v < V; ++v) cfg->validators.push_back(NodeId(v));
  for (int n = 0; n < N; ++n) cfg->users.push_back(NodeId(V + n));
  cfg->mode = options.protocol;
  cfg->block_interval_us = options.block_interval_us;
  cfg->view_timeout_us = options.view_timeout_us;
  cfg->contract = chain::make_contract_config(s, params, V, NodeId(V));
  cfg->contract.initial_user_balance = 1'000'000'000'000;

  netsim::NetConfig net = options.net;
  net.event_budget = options.event_budget;
  net.capture_wire = true;
  netsim::Simulator sim(net);
  std::vector<const UserProcess*> users;
  for (int v = 0; v < V; ++v)
    sim.add(std::make_unique<netsim::ChainProcess>(NodeId(v), chain::Role::Validator, cfg));
  for (int n = 0; n < N; ++n) {
    auto p = std::make_unique<UserProcess>(NodeId(V + n), n, s, qp_tol, cfg, options.view_timeout_us);
    users.push_back(p.get());
    sim.add(std::move(p));
  }
  for (const auto& [node, fault] : options.faults) sim.inject_fault(node, fault);

  sim.run_until(netsim::StopCondition::when([&](const netsim::Simulator& sm) {
    for (const UserProcess* u : users)
      if (!sm.crashed(u->id()) && !u->done()) return false;
    return true;
  }));

  ChainRun run;
  run.trace = sim.trace();
  run.metrics = netsim::metrics(run.trace);
  run.finish_time_us = sim.now();

  const auto live = sim.live_validators();
  if (live.empty()) throw netsim::LivenessTimeout("every validator crashed", sim.events_processed(), sim.now(), 0, 0);
  const chain::NodeState* ref = &sim.process(live.front()).node();
  for (NodeId v : live)
    if (sim.process(v).node().ledger.size() > ref->ledger.size()) ref = &sim.process(v).node();
  run.blocks = ref->ledger.size();

  const chain::ContractState& cs = ref->contract;
  for (const auto& h : cs.history) run.onchain_digests.push_back(h.digest);
  run.offchain_digests = replay_offchain(ref->ledger, N, T, params);
  run.digests_match = run.onchain_digests == run.offchain_digests;

  // Every replica (validators and homes) agrees on the shared prefix, and
  // replaying the reference ledger from genesis reproduces its contract.
  run.replicas_agree =
      chain::state_digest(chain::execute_transactions(chain::ContractState::initial(cfg->contract),
                                                      [&] {
                                                        std::vector<chain::Transaction> all;
                                                        for (const auto& b : ref->ledger)
                                                          all.insert(all.end(), b.txs.begin(), b.txs.end());
                                                        return all;
                                                      }(),
                                                      cfg->contract, *cfg->signer)) == chain::state_digest(cs);
  for (NodeId id : sim.node_ids()) {
    const chain::NodeState& st = sim.process(id).node();
    if (!same_prefix(st.ledger, ref->ledger)) run.replicas_agree = false;
    if (st.ledger.size() == ref->ledger.size() && chain::state_digest(st.contract) != chain::state_digest(cs))
      run.replicas_agree = false;
  }

  std::vector<energy::Schedule> schedules;
  for (const UserProcess* u : users) {
    if (!u->agent().has_solution()) throw std::logic_error("user " + std::to_string(u->id()) + " never solved");
    schedules.push_back(u->agent().schedule());
  }
  run.outcome = make_outcome(s, Mode::Tem, std::move(schedules));
  run.outcome.distributed = true;
  run.outcome.status = cs.converged ? OutcomeStatus::Converged : OutcomeStatus::MaxIter;
  run.outcome.iterations = static_cast<int>(cs.history.size());
  for (const auto& h : cs.history)
    run.outcome.history.push_back({h.k, h.rho, h.primal_residual, h.dual_change, h.digest});
  run.outcome.final_state = cs.dual;

  run.audit = audit_privacy(s, sim.wire());
  return run;
}

PrivacyAudit audit_privacy(const scenario::Scenario& s, const std::vector<chain::Bytes>& wire_messages) {
  std::unordered_set<std::uint64_t> secrets;
  auto add = [&](double v) {
    if (v != 0.0 && std::isfinite(v)) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, 8);
      secrets.insert(bits);
    }
  };
  for (const auto& u : s.users) {
    for (const Series* series : {&u.shiftable_pref, &u.curtailable_plan, &u.inflexible, &u.renewable_cap,
                                 &u.outdoor_temp, &u.setpoint})
      for (double v : *series) add(v);
    for (double v : {u.indoor_initial, u.indoor_min, u.indoor_max, u.sensitivity.shift, u.sensitivity.curtail,
                     u.sensitivity.comfort, u.ev.capacity, u.ev.initial_energy, u.ev.max_charge, u.ev.max_discharge,
                     u.ev.charge_efficiency, u.ev.discharge_efficiency, u.ev.degradation})
      add(v);
  }

  PrivacyAudit audit;
  for (const chain::Bytes& raw : wire_messages) {
    chain::Message m;
    try {
      m = chain::decode_message(raw);
    } catch (const chain::DecodeError& e) {
      ++audit.schema_violations;
      audit.findings.push_back(std::string("undecodable message: ") + e.what());
      continue;
    }
    const auto carried = chain::carried_transactions(m);
    if (carried.empty()) continue;
    ++audit.messages_scanned;

    auto mask = [&](chain::Transaction& tx) {
      ++audit.transactions_scanned;
      switch (tx.kind()) {
        case chain::TxKind::VerticalTrade: {
          auto& v = std::get<chain::VerticalTrade>(tx.payload);
          ++audit.vertical;
          std::fill(v.feed_in.begin(), v.feed_in.end(), 0.0);
          std::fill(v.demand_response.begin(), v.demand_response.end(), 0.0);
          break;
        }
        case chain::TxKind::HorizontalTrade: {
          auto& h = std::get<chain::HorizontalTrade>(tx.payload);
          ++audit.horizontal;
          std::fill(h.slice.begin(), h.slice.end(), 0.0);
          break;
        }
        case chain::TxKind::TokenTransfer: ++audit.transfers; break;
        case chain::TxKind::SctCompute: ++audit.sct; break;
        default:
          ++audit.schema_violations;
          audit.findings.push_back("disallowed transaction kind");
      }
    };
    for (auto& tx : m.txs) mask(tx);
    if (m.block)
      for (auto& tx : m.block->txs) mask(tx);
    for (auto& b : m.blocks)
      for (auto& tx : b.txs) mask(tx);

    const chain::Bytes masked = chain::encode_message(m);
    for (std::size_t i = 0; i + 8 <= masked.size(); ++i) {
      std::uint64_t bits;
      std::memcpy(&bits, masked.data() + i, 8);
      if (secrets.contains(bits)) {
        ++audit.leaks;
        if (audit.findings.size() < 32)
          audit.findings.push_back(std::string(chain::to_string(m.type)) + " from " + std::to_string(m.from) +
                                   " carries a private value at byte " + std::to_string(i));
      }
    }
  }
  return audit;
}

}  // namespace gridledger::tem
