#include "gridledger/chain/contract.hpp"

#include <algorithm>
#include <cmath>

namespace gridledger::chain {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

std::optional<TxReject> apply_horizontal(ContractState& cs, const HorizontalTrade& h, NodeId sender,
                                         const ContractConfig& cfg) {
  const int N = cfg.num_users();
  if (h.user >= std::uint32_t(N) || cfg.users[h.user] != sender) return TxReject::UnknownSender;
  if (cs.closed) return TxReject::Closed;
  if (h.k != std::uint64_t(cs.dual.k)) return TxReject::StaleIteration;
  if (cs.submitted[h.user]) return TxReject::Duplicate;
  if (h.slice.size() != std::size_t(N - 1) * cfg.horizon) return TxReject::BadDimensions;
  cs.dual.e.set_slice(static_cast<int>(h.user), h.slice);
  cs.submitted[h.user] = 1;
  return std::nullopt;
}

std::optional<TxReject> apply_sct(ContractState& cs, const SctCompute& c, NodeId sender, const ContractConfig& cfg) {
  if (std::find(cfg.validators.begin(), cfg.validators.end(), sender) == cfg.validators.end())
    return TxReject::UnknownSender;
  if (cs.closed) return TxReject::Closed;
  if (c.k != std::uint64_t(cs.dual.k)) return TxReject::StaleIteration;
  if (!cs.complete()) return TxReject::Incomplete;

  const tem::TradeTensor lambda_prev = cs.dual.lambda;
  cs.dual = tem::sct_step(cs.dual);
  SctRecord rec;
  rec.k = cs.dual.k;
  rec.rho = cs.dual.rho;
  rec.primal_residual = tem::primal_residual(cs.dual);
  rec.dual_change = tem::dual_change(cs.dual, lambda_prev);
  cs.converged = rec.primal_residual <= cfg.admm.eps && rec.dual_change <= cfg.admm.eps;
  cs.dual.k += 1;
  cs.dual.rho = cfg.admm.rho.at(cs.dual.k);
  rec.digest = tem::dual_digest(cs.dual);
  cs.history.push_back(std::move(rec));
  std::fill(cs.submitted.begin(), cs.submitted.end(), 0);
  cs.closed = cs.converged || cs.dual.k > cfg.admm.max_iter;
  return std::nullopt;
}

std::optional<TxReject> apply_vertical(ContractState& cs, const VerticalTrade& v, NodeId sender,
                                       const ContractConfig& cfg) {
  if (v.user >= std::uint32_t(cfg.num_users()) || cfg.users[v.user] != sender) return TxReject::UnknownSender;
  if (v.feed_in.size() != std::size_t(cfg.horizon) || v.demand_response.size() != std::size_t(cfg.horizon))
    return TxReject::BadDimensions;
  if (!cs.feed_in[v.user].empty()) return TxReject::Duplicate;
  const std::int64_t reward = vertical_reward(v, cfg);
  if (cs.balances[kUtilityAccount] < reward) return TxReject::InsufficientBalance;
  cs.balances[kUtilityAccount] -= reward;
  cs.balances[sender] += reward;
  cs.feed_in[v.user] = v.feed_in;
  cs.demand_response[v.user] = v.demand_response;
  return std::nullopt;
}

std::optional<TxReject> apply_transfer(ContractState& cs, const TokenTransfer& t, NodeId sender) {
  if (t.from != sender || !cs.balances.contains(t.from) || !cs.balances.contains(t.to) || t.from == t.to)
    return TxReject::UnknownSender;
  if (cs.balances[t.from] < t.amount) return TxReject::InsufficientBalance;
  cs.balances[t.from] -= t.amount;
  cs.balances[t.to] += t.amount;
  return std::nullopt;
}

}  // namespace

ContractConfig make_contract_config(const scenario::Scenario& s, const tem::AdmmParams& admm, int num_validators,
                                    NodeId first_user_id) {
  ContractConfig cfg;
  for (int n = 0; n < s.num_users(); ++n) cfg.users.push_back(first_user_id + NodeId(n));
  for (int v = 0; v < num_validators; ++v) cfg.validators.push_back(NodeId(v));
  cfg.horizon = s.horizon();
  cfg.admm = admm;
  cfg.feed_in_price = s.prices.feed_in;
  cfg.dr_price = s.prices.demand_response;
  cfg.trading_price = s.prices.trading;
  cfg.dr_slots = s.grid.dr_slots;
  return cfg;
}

std::string_view to_string(TxReject r) {
  switch (r) {
    case TxReject::BadSignature: return "bad-signature";
    case TxReject::BadAmount: return "bad-amount";
    case TxReject::UnknownSender: return "unknown-sender";
    case TxReject::StaleNonce: return "stale-nonce";
    case TxReject::StaleIteration: return "stale-iteration";
    case TxReject::Duplicate: return "duplicate";
    case TxReject::BadDimensions: return "bad-dimensions";
    case TxReject::Incomplete: return "incomplete";
    case TxReject::Closed: return "closed";
    case TxReject::InsufficientBalance: return "insufficient-balance";
  }
  return "?";
}

ContractState ContractState::initial(const ContractConfig& cfg) {
  ContractState cs;
  const int N = cfg.num_users();
  cs.dual = tem::DualState::zeros(N, cfg.horizon, cfg.admm.rho.at(1));
  cs.submitted.assign(N, 0);
  cs.closed = N == 0;
  cs.balances[kUtilityAccount] = cfg.initial_utility_balance;
  for (NodeId u : cfg.users) cs.balances[u] = cfg.initial_user_balance;
  cs.feed_in.resize(N);
  cs.demand_response.resize(N);
  return cs;
}

bool ContractState::complete() const {
  return !submitted.empty() && std::all_of(submitted.begin(), submitted.end(), [](auto s) { return s != 0; });
}

std::int64_t ContractState::total_balance() const {
  std::int64_t total = 0;
  for (const auto& [id, b] : balances) total += b;
  return total;
}

std::uint64_t ContractState::total_rejected() const {
  std::uint64_t total = 0;
  for (auto r : rejected) total += r;
  return total;
}

std::optional<TxReject> apply_transaction(ContractState& cs, const Transaction& tx, const ContractConfig& cfg,
                                          const Signer& signer) {
  auto reject = [&](TxReject r) -> std::optional<TxReject> {
    cs.rejected[static_cast<int>(r)] += 1;
    return r;
  };
  if (!verify_signature(tx, signer)) return reject(TxReject::BadSignature);
  if (!amounts_valid(tx)) return reject(TxReject::BadAmount);
  if (auto it = cs.last_nonce.find(tx.sender); it != cs.last_nonce.end() && tx.nonce <= it->second)
    return reject(TxReject::StaleNonce);

  // Work on a copy so a rejection leaves the state untouched.
  ContractState next = cs;
  const std::optional<TxReject> r =
      std::visit(Overloaded{
                     [&](const HorizontalTrade& h) { return apply_horizontal(next, h, tx.sender, cfg); },
                     [&](const SctCompute& c) { return apply_sct(next, c, tx.sender, cfg); },
                     [&](const VerticalTrade& v) { return apply_vertical(next, v, tx.sender, cfg); },
                     [&](const TokenTransfer& t) { return apply_transfer(next, t, tx.sender); },
                 },
                 tx.payload);
  if (r) return reject(*r);
  next.last_nonce[tx.sender] = tx.nonce;
  next.applied += 1;
  cs = std::move(next);
  return std::nullopt;
}

ContractState execute_transactions(ContractState cs, std::span<const Transaction> txs, const ContractConfig& cfg,
                                   const Signer& signer) {
  for (const auto& tx : txs) apply_transaction(cs, tx, cfg, signer);
  return cs;
}

std::int64_t vertical_reward(const VerticalTrade& v, const ContractConfig& cfg) {
  double total = 0.0;
  for (int t = 0; t < cfg.horizon; ++t) total += cfg.feed_in_price[t] * v.feed_in[t];
  for (int t : cfg.dr_slots) total += cfg.dr_price[t] * v.demand_response[t];
  return std::max<std::int64_t>(0, std::llround(kMicroTokens * total));
}

const tem::DualState& reveal(const ContractState& cs) { return cs.dual; }

Bytes encode_contract_state(const ContractState& cs) {
  ByteWriter w;
  w.bytes(tem::encode_dual_state(cs.dual));
  w.bytes(cs.submitted);
  w.u8(cs.closed);
  w.u8(cs.converged);
  w.u32(static_cast<std::uint32_t>(cs.history.size()));
  for (const auto& h : cs.history) {
    w.u64(static_cast<std::uint64_t>(h.k));
    w.f64(h.rho);
    w.f64(h.primal_residual);
    w.f64(h.dual_change);
    w.bytes(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(h.digest.data()), h.digest.size()));
  }
  w.u32(static_cast<std::uint32_t>(cs.balances.size()));
  for (const auto& [id, b] : cs.balances) {
    w.u32(id);
    w.i64(b);
  }
  w.u32(static_cast<std::uint32_t>(cs.last_nonce.size()));
  for (const auto& [id, n] : cs.last_nonce) {
    w.u32(id);
    w.u64(n);
  }
  for (std::size_t n = 0; n < cs.feed_in.size(); ++n) {
    w.f64_array(cs.feed_in[n]);
    w.f64_array(cs.demand_response[n]);
  }
  w.u64(cs.applied);
  for (auto r : cs.rejected) w.u64(r);
  return w.take();
}

Digest state_digest(const ContractState& cs) { return sha256(encode_contract_state(cs)); }

}  // namespace gridledger::chain
