#include "gridledger/chain/consensus.hpp"

#include <algorithm>

namespace gridledger::chain {

namespace {

constexpr std::size_t kMaxPending = 4096;
constexpr std::size_t kMaxSyncBlocks = 64;
constexpr std::uint64_t kMaxBackoffDoublings = 10;

bool is_validator(const ConsensusConfig& cfg, NodeId id) {
  return std::find(cfg.validators.begin(), cfg.validators.end(), id) != cfg.validators.end();
}

class Replica {
 public:
  Replica(NodeState& s, const ConsensusConfig& cfg, std::int64_t now, Outbox& out)
      : s_(s), cfg_(cfg), now_(now), out_(out) {}

  void start() {
    if (s_.role != Role::Validator) return;
    arm_height_timers();
  }

  void deliver(const Message& m) {
    dispatch(m);
    while (dirty_) {
      dirty_ = false;
      std::vector<Message> replay = std::move(s_.pending);
      s_.pending.clear();
      for (const Message& p : replay) dispatch(p);
    }
  }

 private:
  // ---- plumbing -----------------------------------------------------------

  void send(NodeId to, Message m) {
    m.from = s_.id;
    m.to = to;
    out_.push_back({std::move(m), 0});
  }

  void broadcast(const Message& m) {
    for (NodeId v : cfg_.validators)
      if (v != s_.id) send(v, m);
  }

  void timer(TimerKind kind, std::uint64_t view, std::int64_t delay) {
    Message m;
    m.type = MsgType::Timeout;
    m.from = m.to = s_.id;
    m.height = s_.height;
    m.view = view;
    m.timer = kind;
    out_.push_back({std::move(m), delay});
  }

  std::int64_t view_timeout(std::uint64_t view) const {
    const std::uint64_t doublings = std::min(view - s_.view_start, kMaxBackoffDoublings);
    return cfg_.view_timeout_us << doublings;
  }

  bool leads(std::uint64_t view) const { return leader_for(s_.height, cfg_.validators, view) == s_.id; }

  const BlockHeader* tip_header() const { return s_.tip() ? &s_.tip()->header : nullptr; }

  Signature vote(VotePhase phase, const Digest& d) const {
    return cfg_.signer->sign(s_.id, vote_message(phase, s_.height, s_.view, d));
  }

  bool vote_valid(VotePhase phase, const Message& m) const {
    return cfg_.signer->verify(m.from, vote_message(phase, m.height, m.view, m.digest), m.signature);
  }

  ConsensusProof certify(VotePhase phase, const Digest& d, const std::map<NodeId, Signature>& votes) const {
    std::vector<Vote> vs;
    for (const auto& [id, sig] : votes) vs.push_back({id, d, sig});
    return aggregate_votes(vs, cfg_.quorum(), phase, s_.height, s_.view);
  }

  void defer(const Message& m) {
    if (s_.pending.size() >= kMaxPending) s_.pending.erase(s_.pending.begin());
    s_.pending.push_back(m);
  }

  void request_sync(NodeId from) {
    if (now_ < s_.next_sync_us) return;
    s_.next_sync_us = now_ + std::max<std::int64_t>(cfg_.view_timeout_us / 8, 1);
    Message m;
    m.type = MsgType::SyncRequest;
    m.height = s_.height;
    send(from, m);
  }

  void serve(NodeId to, std::uint64_t from_height) {
    if (s_.role != Role::Validator || from_height >= s_.height) return;
    Message m;
    m.type = MsgType::SyncResponse;
    m.height = from_height;
    const std::uint64_t end = std::min<std::uint64_t>(s_.height, from_height + kMaxSyncBlocks);
    for (std::uint64_t h = from_height; h < end; ++h) m.blocks.push_back(s_.ledger[h]);
    send(to, std::move(m));
  }

  void arm_height_timers() {
    timer(TimerKind::View, s_.view, view_timeout(s_.view));
    if (leads(s_.view)) timer(TimerKind::Propose, s_.view, cfg_.block_interval_us);
  }

  // ---- dispatch -----------------------------------------------------------

  void dispatch(const Message& m) {
    switch (m.type) {
      case MsgType::Timeout: on_timer(m); return;
      case MsgType::ClientTx: on_client_tx(m); return;
      case MsgType::SyncRequest: serve(m.from, m.height); return;
      case MsgType::SyncResponse:
      case MsgType::BlockAnnounce: on_blocks(m); return;
      default: break;
    }
    if (s_.role != Role::Validator) return;
    if (!is_validator(cfg_, m.from)) {
      ++s_.invalid_messages;
      return;
    }
    if (m.height < s_.height) {
      // A peer still working on a height we finished: help it catch up.
      if (m.type == MsgType::ViewChange && now_ >= s_.next_serve_us[m.from]) {
        s_.next_serve_us[m.from] = now_ + std::max<std::int64_t>(cfg_.view_timeout_us / 8, 1);
        serve(m.from, m.height);
      }
      return;
    }
    if (m.height > s_.height) {
      defer(m);
      if (m.height >= s_.height + 2) request_sync(m.from);
      return;
    }
    switch (m.type) {
      case MsgType::PrePrepare: on_pre_prepare(m); break;
      case MsgType::PrepareVote: on_prepare_vote(m); break;
      case MsgType::AggregatedPrepare: on_aggregated_prepare(m); break;
      case MsgType::CommitVote: on_commit_vote(m); break;
      case MsgType::AggregatedCommit: on_aggregated_commit(m); break;
      case MsgType::ViewChange: on_view_change(m); break;
      default: break;
    }
  }

  void on_client_tx(const Message& m) {
    if (s_.role != Role::Validator) return;
    for (const Transaction& tx : m.txs) {
      const Digest d = tx_digest(tx);
      if (s_.committed_txs.contains(d) || s_.mempool_ids.contains(d)) continue;
      if (!amounts_valid(tx) || !verify_signature(tx, *cfg_.signer)) {
        ++s_.invalid_messages;
        continue;
      }
      s_.mempool.push_back(tx);
      s_.mempool_ids.insert(d);
    }
  }

  void on_timer(const Message& m) {
    if (s_.role != Role::Validator || m.height != s_.height) return;
    if (m.timer == TimerKind::Propose) {
      if (m.view == s_.view && s_.view == s_.view_start && leads(s_.view) && !s_.proposed && s_.vc_view <= s_.view)
        propose();
      return;
    }
    if (m.timer != TimerKind::View) return;
    const std::uint64_t current = std::max(s_.view, s_.vc_view);
    if (m.view != current) return;
    for (const Message& p : s_.pending)
      if (p.height > s_.height) {
        request_sync(p.from);
        break;
      }
    start_view_change(current + 1);
  }

  // ---- normal case --------------------------------------------------------

  Block build_block() {
    Block b;
    ContractState sim = s_.contract;
    std::vector<Transaction> keep;
    for (Transaction& tx : s_.mempool) {
      if (b.txs.size() + 1 >= cfg_.max_block_txs) {
        keep.push_back(std::move(tx));
        continue;
      }
      const auto r = apply_transaction(sim, tx, cfg_.contract, *cfg_.signer);
      if (!r) {
        b.txs.push_back(tx);
        keep.push_back(std::move(tx));
      } else if (*r == TxReject::StaleIteration && std::visit(
                     [&](const auto& p) {
                       if constexpr (requires { p.k; }) return p.k > std::uint64_t(sim.dual.k);
                       return false;
                     },
                     tx.payload)) {
        keep.push_back(std::move(tx));  // decision for an iteration that has not opened yet
      } else if (*r == TxReject::InsufficientBalance) {
        keep.push_back(std::move(tx));
      } else {
        s_.mempool_ids.erase(tx_digest(tx));
      }
    }
    s_.mempool = std::move(keep);
    if (!sim.closed && sim.complete() && b.txs.size() < cfg_.max_block_txs) {
      const std::uint64_t k = std::uint64_t(sim.dual.k);
      b.txs.push_back(make_signed(SctCompute{k}, s_.id, k, *cfg_.signer));
    }
    b.header.height = s_.height;
    b.header.view = s_.view;
    b.header.parent = s_.tip() ? s_.tip()->digest() : Digest{};
    b.header.timestamp_us = now_;
    b.header.tx_root = tx_root(b.txs);
    b.header.proposer = s_.id;
    return b;
  }

  const Block* find_block(const Digest& d) const {
    if (s_.proposal && s_.proposal->digest() == d) return &*s_.proposal;
    if (s_.locked_block && s_.locked_block->digest() == d) return &*s_.locked_block;
    auto it = s_.known_blocks.find(d);
    return it == s_.known_blocks.end() ? nullptr : &it->second;
  }

  // Highest valid prepare certificate among justification votes.
  static const ConsensusProof* highest_lock(const std::vector<ViewChangeVote>& votes) {
    const ConsensusProof* best = nullptr;
    for (const auto& v : votes)
      if (v.lock && (!best || v.lock->view > best->view)) best = &*v.lock;
    return best;
  }

  void propose() {
    s_.proposed = true;
    std::vector<ViewChangeVote> justification;
    std::optional<Block> block;
    if (s_.view > s_.view_start) {
      for (const auto& [id, v] : s_.view_changes[s_.view]) justification.push_back(v);
      if (const ConsensusProof* lock = highest_lock(justification)) {
        const Block* b = find_block(lock->block);
        if (!b) return;
        block = *b;
        block->proof = {};
      }
    }
    if (!block) block = build_block();
    const Digest d = block->digest();
    s_.proposal = block;
    s_.phase = Phase::PrePrepared;
    const Signature sig = vote(VotePhase::Prepare, d);
    s_.prepare_votes[d][s_.id] = sig;

    Message m;
    m.type = MsgType::PrePrepare;
    m.height = s_.height;
    m.view = s_.view;
    m.block = std::move(block);
    m.signature = sig;
    m.view_changes = std::move(justification);
    broadcast(m);
    try_prepared();
  }

  // Checks 2f+1 distinct, correctly signed ViewChange votes for `view`.
  bool justification_valid(const std::vector<ViewChangeVote>& votes, std::uint64_t view) const {
    std::set<NodeId> seen;
    const Digest msg = view_change_message(s_.height, view);
    for (const auto& v : votes) {
      if (v.view != view || !is_validator(cfg_, v.validator) || !seen.insert(v.validator).second) return false;
      if (!cfg_.signer->verify(v.validator, msg, v.signature)) return false;
      if (v.lock && (v.lock->phase != VotePhase::Prepare || v.lock->height != s_.height ||
                     !verify_proof(*v.lock, cfg_.validators, *cfg_.signer)))
        return false;
    }
    return seen.size() >= cfg_.quorum();
  }

  void on_pre_prepare(const Message& m) {
    if (m.view < s_.view) return;
    if (!m.block || m.from != leader_for(s_.height, cfg_.validators, m.view)) {
      ++s_.invalid_messages;
      return;
    }
    const bool changed_view = m.view > s_.view_start;
    if (changed_view && !justification_valid(m.view_changes, m.view)) {
      ++s_.invalid_messages;
      return;
    }
    if (m.view > s_.view) enter_view(m.view);
    if (s_.vc_view > s_.view || s_.phase != Phase::Idle) return;

    const Block& b = *m.block;
    const Digest d = b.digest();
    if (check_proposal(b, tip_header(), cfg_.validators, *cfg_.signer) != BlockCheck::Ok || b.header.view > m.view) {
      ++s_.invalid_messages;
      return;
    }
    const ConsensusProof* justified = changed_view ? highest_lock(m.view_changes) : nullptr;
    if (justified ? justified->block != d : b.header.view != m.view) {
      ++s_.invalid_messages;
      return;
    }
    if (s_.lock && s_.lock->block != d && !(justified && justified->view > s_.lock->view)) return;
    if (!cfg_.signer->verify(m.from, vote_message(VotePhase::Prepare, s_.height, m.view, d), m.signature)) {
      ++s_.invalid_messages;
      return;
    }

    s_.proposal = b;
    s_.proposal->proof = {};
    s_.phase = Phase::PrePrepared;
    s_.prepare_votes[d][m.from] = m.signature;
    Message v;
    v.type = MsgType::PrepareVote;
    v.height = s_.height;
    v.view = s_.view;
    v.digest = d;
    v.signature = vote(VotePhase::Prepare, d);
    if (cfg_.mode == ProtocolMode::Modified) {
      send(m.from, v);
    } else {
      s_.prepare_votes[d][s_.id] = v.signature;
      broadcast(v);
      try_prepared();
    }
  }

  void on_prepare_vote(const Message& m) {
    if (m.view > s_.view) return defer(m);
    if (m.view < s_.view) return;
    if (!vote_valid(VotePhase::Prepare, m)) {
      ++s_.invalid_messages;
      return;
    }
    s_.prepare_votes[m.digest][m.from] = m.signature;
    try_prepared();
  }

  void set_lock(const ConsensusProof& cert, const Block& b) {
    if (!s_.lock || cert.view >= s_.lock->view) {
      s_.lock = cert;
      s_.locked_block = b;
    }
  }

  void try_prepared() {
    if (!s_.proposal || s_.phase != Phase::PrePrepared) return;
    const Digest d = s_.proposal->digest();
    const auto& votes = s_.prepare_votes[d];
    if (votes.size() < cfg_.quorum()) return;
    if (cfg_.mode == ProtocolMode::Modified && !leads(s_.view)) return;

    const ConsensusProof cert = certify(VotePhase::Prepare, d, votes);
    set_lock(cert, *s_.proposal);
    s_.phase = Phase::Prepared;
    const Signature sig = vote(VotePhase::Commit, d);
    s_.commit_votes[d][s_.id] = sig;
    if (cfg_.mode == ProtocolMode::Modified) {
      s_.prepare_aggregated = true;
      Message a;
      a.type = MsgType::AggregatedPrepare;
      a.height = s_.height;
      a.view = s_.view;
      a.proof = cert;
      broadcast(a);
    } else {
      Message c;
      c.type = MsgType::CommitVote;
      c.height = s_.height;
      c.view = s_.view;
      c.digest = d;
      c.signature = sig;
      broadcast(c);
    }
    try_commit();
  }

  void on_aggregated_prepare(const Message& m) {
    if (cfg_.mode != ProtocolMode::Modified || !m.proof) {
      ++s_.invalid_messages;
      return;
    }
    if (m.view > s_.view) return defer(m);
    if (m.view < s_.view) return;
    const ConsensusProof& p = *m.proof;
    if (p.phase != VotePhase::Prepare || p.height != s_.height || p.view != s_.view ||
        !verify_proof(p, cfg_.validators, *cfg_.signer)) {
      ++s_.invalid_messages;
      return;
    }
    if (!s_.proposal || s_.proposal->digest() != p.block || s_.phase != Phase::PrePrepared) return;
    set_lock(p, *s_.proposal);
    s_.phase = Phase::Prepared;
    Message c;
    c.type = MsgType::CommitVote;
    c.height = s_.height;
    c.view = s_.view;
    c.digest = p.block;
    c.signature = vote(VotePhase::Commit, p.block);
    send(m.from, c);
  }

  void on_commit_vote(const Message& m) {
    if (m.view > s_.view) return defer(m);
    if (m.view < s_.view) return;
    if (!vote_valid(VotePhase::Commit, m)) {
      ++s_.invalid_messages;
      return;
    }
    s_.commit_votes[m.digest][m.from] = m.signature;
    try_commit();
  }

  void try_commit() {
    if (!s_.proposal || s_.phase != Phase::Prepared) return;
    const Digest d = s_.proposal->digest();
    const auto& votes = s_.commit_votes[d];
    if (votes.size() < cfg_.quorum()) return;
    if (cfg_.mode == ProtocolMode::Modified && !leads(s_.view)) return;

    Block b = *s_.proposal;
    b.proof = certify(VotePhase::Commit, d, votes);
    if (cfg_.mode == ProtocolMode::Modified) {
      Message a;
      a.type = MsgType::AggregatedCommit;
      a.height = s_.height;
      a.view = s_.view;
      a.proof = b.proof;
      broadcast(a);
    }
    commit(std::move(b));
  }

  void on_aggregated_commit(const Message& m) {
    if (cfg_.mode != ProtocolMode::Modified || !m.proof) {
      ++s_.invalid_messages;
      return;
    }
    const ConsensusProof& p = *m.proof;
    if (p.phase != VotePhase::Commit || p.height != s_.height || !verify_proof(p, cfg_.validators, *cfg_.signer)) {
      ++s_.invalid_messages;
      return;
    }
    const Block* known = find_block(p.block);
    if (!known) {
      request_sync(m.from);
      return;
    }
    Block b = *known;
    b.proof = p;
    if (verify_block(b, tip_header(), cfg_.validators, *cfg_.signer) != BlockCheck::Ok) {
      ++s_.invalid_messages;
      return;
    }
    commit(std::move(b));
  }

  // ---- view change --------------------------------------------------------

  void start_view_change(std::uint64_t target) {
    s_.vc_view = target;
    ViewChangeVote v;
    v.validator = s_.id;
    v.view = target;
    v.signature = cfg_.signer->sign(s_.id, view_change_message(s_.height, target));
    v.lock = s_.lock;
    s_.view_changes[target][s_.id] = v;

    Message m;
    m.type = MsgType::ViewChange;
    m.height = s_.height;
    m.view = target;
    m.view_change = v;
    m.block = s_.locked_block;
    broadcast(m);
    timer(TimerKind::View, target, view_timeout(target));
    check_view_changes(target);
  }

  void on_view_change(const Message& m) {
    if (!m.view_change) {
      ++s_.invalid_messages;
      return;
    }
    const ViewChangeVote& v = *m.view_change;
    if (v.validator != m.from || v.view != m.view ||
        !cfg_.signer->verify(v.validator, view_change_message(s_.height, v.view), v.signature)) {
      ++s_.invalid_messages;
      return;
    }
    if (v.lock) {
      if (v.lock->phase != VotePhase::Prepare || v.lock->height != s_.height || !m.block ||
          m.block->digest() != v.lock->block || !verify_proof(*v.lock, cfg_.validators, *cfg_.signer)) {
        ++s_.invalid_messages;
        return;
      }
      Block b = *m.block;
      b.proof = {};
      s_.known_blocks.emplace(v.lock->block, std::move(b));
    }
    if (m.view <= s_.view) return;
    s_.view_changes[m.view][m.from] = v;
    check_view_changes(m.view);
  }

  void check_view_changes(std::uint64_t target) {
    const std::size_t count = s_.view_changes[target].size();
    if (count >= fault_tolerance(cfg_.validators.size()) + 1 && s_.vc_view < target) {
      start_view_change(target);
      return;
    }
    if (count >= cfg_.quorum() && target > s_.view) enter_view(target);
  }

  void enter_view(std::uint64_t view) {
    s_.view = view;
    s_.vc_view = std::max(s_.vc_view, view);
    s_.phase = Phase::Idle;
    s_.proposal.reset();
    s_.prepare_votes.clear();
    s_.commit_votes.clear();
    s_.prepare_aggregated = false;
    s_.proposed = false;
    ++s_.views_changed;
    dirty_ = true;
    timer(TimerKind::View, view, view_timeout(view));
    if (leads(view)) propose();
  }

  // ---- ledger -------------------------------------------------------------

  void commit(Block b) {
    s_.contract = execute_transactions(std::move(s_.contract), b.txs, cfg_.contract, *cfg_.signer);
    for (const auto& tx : b.txs) {
      const Digest d = tx_digest(tx);
      s_.committed_txs.insert(d);
      s_.mempool_ids.erase(d);
    }
    std::erase_if(s_.mempool, [&](const Transaction& tx) { return s_.committed_txs.contains(tx_digest(tx)); });

    const std::uint64_t next_view = b.header.view;
    if (s_.role == Role::Validator)
      for (std::size_t u = 0; u < cfg_.users.size(); ++u) {
        const auto [a, c] = cfg_.announcers(u);
        if (a != s_.id && c != s_.id) continue;
        Message m;
        m.type = MsgType::BlockAnnounce;
        m.height = b.header.height;
        m.blocks.push_back(b);
        send(cfg_.users[u], std::move(m));
      }
    s_.ledger.push_back(std::move(b));

    s_.height += 1;
    s_.view = s_.view_start = s_.vc_view = next_view;
    s_.phase = Phase::Idle;
    s_.proposed = false;
    s_.proposal.reset();
    s_.prepare_votes.clear();
    s_.commit_votes.clear();
    s_.prepare_aggregated = false;
    s_.lock.reset();
    s_.locked_block.reset();
    s_.view_changes.clear();
    s_.known_blocks.clear();
    std::erase_if(s_.pending_blocks, [&](const auto& kv) { return kv.first < s_.height; });
    dirty_ = true;
    if (s_.role == Role::Validator) arm_height_timers();
  }

  void on_blocks(const Message& m) {
    for (const Block& b : m.blocks)
      if (b.header.height >= s_.height) s_.pending_blocks.emplace(b.header.height, b);
    for (auto it = s_.pending_blocks.find(s_.height); it != s_.pending_blocks.end();
         it = s_.pending_blocks.find(s_.height)) {
      Block b = std::move(it->second);
      s_.pending_blocks.erase(it);
      if (verify_block(b, tip_header(), cfg_.validators, *cfg_.signer) != BlockCheck::Ok) {
        ++s_.invalid_messages;
        break;
      }
      commit(std::move(b));
    }
    if (!s_.pending_blocks.empty()) request_sync(m.from);
  }

  NodeState& s_;
  const ConsensusConfig& cfg_;
  std::int64_t now_;
  Outbox& out_;
  bool dirty_ = false;
};

}  // namespace

std::string_view to_string(ProtocolMode m) { return m == ProtocolMode::Modified ? "modified" : "classic"; }

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Idle: return "idle";
    case Phase::PrePrepared: return "pre-prepared";
    case Phase::Prepared: return "prepared";
    case Phase::Committed: return "committed";
  }
  return "?";
}

std::pair<NodeId, NodeId> ConsensusConfig::announcers(std::size_t user_slot) const {
  const std::size_t n = validators.size();
  return {validators[user_slot % n], validators[(user_slot + 1) % n]};
}

NodeState make_node(NodeId id, Role role, const ConsensusConfig& cfg) {
  if (cfg.validators.empty()) throw std::invalid_argument("make_node: empty validator set");
  NodeState s;
  s.id = id;
  s.role = role;
  s.contract = ContractState::initial(cfg.contract);
  return s;
}

Outbox start(NodeState& s, std::int64_t now_us, const ConsensusConfig& cfg) {
  Outbox out;
  Replica(s, cfg, now_us, out).start();
  return out;
}

Outbox step(NodeState& s, const Message& m, std::int64_t now_us, const ConsensusConfig& cfg) {
  Outbox out;
  Replica(s, cfg, now_us, out).deliver(m);
  return out;
}

std::pair<NodeState, Outbox> handle_message(NodeState s, const Message& m, std::int64_t now_us,
                                            const ConsensusConfig& cfg) {
  Outbox out = step(s, m, now_us, cfg);
  return {std::move(s), std::move(out)};
}

}  // namespace gridledger::chain
