#include "gridledger/energy_model.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace gridledger {

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::Tem: return "TEM";
    case Mode::Bs1: return "BS1";
    case Mode::Bs2: return "BS2";
    case Mode::Bs3: return "BS3";
  }
  return "?";
}

std::optional<Mode> parse_mode(std::string_view text) {
  for (Mode m : {Mode::Tem, Mode::Bs1, Mode::Bs2, Mode::Bs3}) {
    auto name = to_string(m);
    if (text.size() == name.size() &&
        std::equal(text.begin(), text.end(), name.begin(),
                   [](char a, char b) { return std::toupper(static_cast<unsigned char>(a)) == b; }))
      return m;
  }
  return std::nullopt;
}

}  // namespace gridledger

namespace gridledger::energy {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kNumVars = static_cast<int>(Var::Peak) + 1;

constexpr std::array<std::string_view, kNumVars> kVarNames = {
    "l_A", "l_S", "l_C", "s_G", "s_R", "p_cha", "p_dis", "e_V", "Tin", "e_FIT", "e_DR", "e_T", "z"};

constexpr std::array<std::string_view, 13> kRowTagNames = {
    "shift-total",     "hvac-dynamics", "ev-dynamics",  "ev-terminal",
    "renewable-share", "dr-cap",        "peak-epigraph", "balance-tem",
    "balance-bs1",     "balance-bs2",   "balance-bs3",  "trade-clearing", "generic"};

bool contains(std::span<const int> slots, int t) {
  return std::find(slots.begin(), slots.end(), t) != slots.end();
}

void check_user(const scenario::Scenario& s, int n) {
  if (n < 0 || n >= s.num_users())
    throw std::out_of_range("user index " + std::to_string(n) + " out of range");
}

}  // namespace

std::string_view to_string(Var v) { return kVarNames[static_cast<int>(v)]; }

std::string_view to_string(RowTag tag) { return kRowTagNames[static_cast<int>(tag)]; }

std::optional<RowTag> parse_row_tag(std::string_view text) {
  for (std::size_t i = 0; i < kRowTagNames.size(); ++i)
    if (kRowTagNames[i] == text) return static_cast<RowTag>(i);
  return std::nullopt;
}

// ---- layout -----------------------------------------------------------------

UserLayout::UserLayout(Mode mode, int horizon, int num_users)
    : mode_(mode), horizon_(horizon), num_peers_(has_horizontal(mode) ? num_users - 1 : 0),
      offsets_(kNumVars, -1) {
  auto push = [&](Var v, int size) {
    offsets_[static_cast<int>(v)] = size_;
    blocks_.push_back({v, size_, size});
    size_ += size;
  };
  for (Var v : {Var::HvacLoad, Var::ShiftLoad, Var::CurtailLoad, Var::GridSupply, Var::RenewableSupply,
                Var::EvCharge, Var::EvDischarge, Var::EvEnergy, Var::IndoorTemp})
    push(v, horizon);
  if (has_vertical(mode)) {
    push(Var::FeedIn, horizon);
    push(Var::DemandResponse, horizon);
  }
  if (num_peers_ > 0) push(Var::Trade, num_peers_ * horizon);
  push(Var::Peak, 1);
}

bool UserLayout::has(Var v) const { return offsets_[static_cast<int>(v)] >= 0; }

int UserLayout::index(Var v, int t) const {
  const int off = offsets_[static_cast<int>(v)];
  if (off < 0) throw std::logic_error(std::string("layout has no block ") + std::string(to_string(v)));
  if (v == Var::Peak) return off;
  return off + t;
}

int UserLayout::trade_index(int peer_slot, int t) const {
  return index(Var::Trade) + peer_slot * horizon_ + t;
}

std::string describe_layout(const UserLayout& layout) {
  std::ostringstream out;
  out << "block,first,last\n";
  for (const auto& b : layout.blocks()) out << to_string(b.var) << ',' << b.offset << ',' << b.offset + b.size - 1 << '\n';
  return out.str();
}

// ---- schedule ---------------------------------------------------------------

Schedule Schedule::zeros(int horizon, int num_users) {
  Schedule s;
  for (Series* v : {&s.hvac_load, &s.shift_load, &s.curtail_load, &s.grid_supply, &s.renewable_supply,
                    &s.ev_charge, &s.ev_discharge, &s.ev_energy, &s.feed_in, &s.demand_response,
                    &s.indoor_temp})
    v->assign(horizon, 0.0);
  s.trade.assign(num_users, Series(horizon, 0.0));
  return s;
}

double Schedule::trade_sum(int t) const {
  double sum = 0.0;
  for (const auto& row : trade) sum += row[t];
  return sum;
}

CostBreakdown& CostBreakdown::operator+=(const CostBreakdown& o) {
  shift += o.shift;
  curtail += o.curtail;
  comfort += o.comfort;
  grid += o.grid;
  battery += o.battery;
  home += o.home;
  feed_in += o.feed_in;
  demand_response += o.demand_response;
  trading += o.trading;
  vertical += o.vertical;
  net += o.net;
  return *this;
}

Schedule extract_schedule(const UserLayout& layout, std::span<const double> x, int n, int num_users) {
  if (static_cast<int>(x.size()) != layout.size()) throw std::invalid_argument("extract_schedule: size mismatch");
  const int T = layout.horizon();
  Schedule s = Schedule::zeros(T, num_users);
  auto read = [&](Var v, Series& out) {
    if (!layout.has(v)) return;
    for (int t = 0; t < T; ++t) out[t] = x[layout.index(v, t)];
  };
  read(Var::HvacLoad, s.hvac_load);
  read(Var::ShiftLoad, s.shift_load);
  read(Var::CurtailLoad, s.curtail_load);
  read(Var::GridSupply, s.grid_supply);
  read(Var::RenewableSupply, s.renewable_supply);
  read(Var::EvCharge, s.ev_charge);
  read(Var::EvDischarge, s.ev_discharge);
  read(Var::EvEnergy, s.ev_energy);
  read(Var::IndoorTemp, s.indoor_temp);
  read(Var::FeedIn, s.feed_in);
  read(Var::DemandResponse, s.demand_response);
  if (layout.has(Var::Trade)) {
    for (int p = 0; p < layout.num_peers(); ++p) {
      const int m = UserLayout::peer_of(n, p);
      for (int t = 0; t < T; ++t) s.trade[m][t] = x[layout.trade_index(p, t)];
    }
  }
  s.peak = x[layout.index(Var::Peak)];
  return s;
}

// ---- dynamics ---------------------------------------------------------------

Series hvac_trajectory(std::span<const double> hvac_load, std::span<const double> outdoor, double initial,
                       double alpha, double beta) {
  if (hvac_load.size() != outdoor.size()) throw std::invalid_argument("hvac_trajectory: length mismatch");
  Series tin(hvac_load.size());
  double prev = initial;
  for (std::size_t t = 0; t < hvac_load.size(); ++t) {
    tin[t] = prev + alpha * hvac_load[t] - beta * (prev - outdoor[t]);
    prev = tin[t];
  }
  return tin;
}

Series ev_trajectory(std::span<const double> charge, std::span<const double> discharge, double initial,
                     double charge_eff, double discharge_eff) {
  if (charge.size() != discharge.size()) throw std::invalid_argument("ev_trajectory: length mismatch");
  Series e(charge.size());
  double prev = initial;
  for (std::size_t t = 0; t < charge.size(); ++t) {
    e[t] = prev + charge_eff * charge[t] - discharge[t] / discharge_eff;
    prev = e[t];
  }
  return e;
}

// ---- costs ------------------------------------------------------------------

CostBreakdown home_cost_terms(const Schedule& sch, const scenario::Scenario& s, int n) {
  check_user(s, n);
  const int T = s.horizon();
  const auto& u = s.users[n];
  for (const Series* v : {&sch.hvac_load, &sch.shift_load, &sch.curtail_load, &sch.grid_supply, &sch.ev_discharge})
    if (static_cast<int>(v->size()) != T) throw std::invalid_argument("home_cost_terms: dimension mismatch");

  CostBreakdown c;
  for (int t : s.grid.shift_slots[n]) {
    const double d = sch.shift_load[t] - u.shiftable_pref[t];
    c.shift += d * d;
  }
  c.shift *= u.sensitivity.shift;

  for (int t = 0; t < T; ++t) {
    const double d = sch.curtail_load[t] - u.curtailable_plan[t];
    c.curtail += d * d;
  }
  c.curtail *= u.sensitivity.curtail;

  const Series tin = hvac_trajectory(sch.hvac_load, u.outdoor_temp, u.indoor_initial, s.hvac.alpha, s.hvac.beta);
  for (int t = 0; t < T; ++t) {
    const double d = tin[t] - u.setpoint[t];
    c.comfort += d * d;
  }
  c.comfort *= u.sensitivity.comfort;

  double total = 0.0, peak = 0.0;
  for (int t = 0; t < T; ++t) {
    total += sch.grid_supply[t];
    peak = t == 0 ? sch.grid_supply[t] : std::max(peak, sch.grid_supply[t]);
  }
  c.grid = s.tariff.energy_price * total + s.tariff.peak_price * peak;

  for (int t = u.ev.arrival; t <= u.ev.departure; ++t) c.battery += sch.ev_discharge[t] * sch.ev_discharge[t];
  c.battery *= u.ev.degradation;

  c.home = c.shift + c.curtail + c.comfort + c.grid + c.battery;
  c.net = c.home;
  return c;
}

CostBreakdown reward_terms(const Schedule& sch, const scenario::TransactivePrices& prices,
                           std::span<const int> dr_slots) {
  const std::size_t T = prices.feed_in.size();
  if (sch.feed_in.size() != T || sch.demand_response.size() != T)
    throw std::invalid_argument("reward_terms: dimension mismatch");
  for (const auto& row : sch.trade)
    if (row.size() != T) throw std::invalid_argument("reward_terms: dimension mismatch");

  CostBreakdown r;
  for (std::size_t t = 0; t < T; ++t) r.feed_in += prices.feed_in[t] * sch.feed_in[t];
  for (int t : dr_slots) r.demand_response += prices.demand_response[t] * sch.demand_response[t];
  for (std::size_t t = 0; t < T; ++t) {
    double sold = 0.0;
    for (const auto& row : sch.trade) sold += row[t];
    r.trading += prices.trading[t] * sold;
  }
  r.vertical = r.feed_in + r.demand_response;
  r.net = -r.vertical - r.trading;
  return r;
}

CostBreakdown evaluate(const Schedule& sch, const scenario::Scenario& s, int n) {
  CostBreakdown c = home_cost_terms(sch, s, n);
  CostBreakdown r = reward_terms(sch, s.prices, s.grid.dr_slots);
  c.feed_in = r.feed_in;
  c.demand_response = r.demand_response;
  c.trading = r.trading;
  c.vertical = r.vertical;
  c.net = c.home - c.vertical - c.trading;
  return c;
}

// ---- constraint builder -----------------------------------------------------

ConstraintBuilder::ConstraintBuilder(int num_vars)
    : num_vars_(num_vars), lower_(num_vars, -kInf), upper_(num_vars, kInf) {}

void ConstraintBuilder::add_eq(RowTag tag, std::vector<Term> terms, double rhs) {
  eq_.push_back({tag, std::move(terms), rhs});
}

void ConstraintBuilder::add_le(RowTag tag, std::vector<Term> terms, double rhs) {
  le_.push_back({tag, std::move(terms), rhs});
}

void ConstraintBuilder::set_bounds(int col, double lo, double hi) {
  lower_.at(col) = lo;
  upper_.at(col) = hi;
}

void ConstraintBuilder::append(const LinearConstraintSet& other, int col_offset) {
  auto rows_of = [&](const Eigen::MatrixXd& m, int i) {
    std::vector<Term> terms;
    for (int j = 0; j < m.cols(); ++j)
      if (m(i, j) != 0.0) terms.emplace_back(j + col_offset, m(i, j));
    return terms;
  };
  for (int i = 0; i < other.num_eq(); ++i) add_eq(other.eq_tags[i], rows_of(other.eq_matrix, i), other.eq_rhs[i]);
  for (int i = 0; i < other.num_in(); ++i) {
    auto terms = rows_of(other.in_matrix, i);
    double rhs = other.in_rhs[i];
    if (other.in_sense[i] == Sense::GreaterEqual) {
      for (auto& [c, v] : terms) v = -v;
      rhs = -rhs;
    }
    add_le(other.in_tags[i], std::move(terms), rhs);
  }
  for (int j = 0; j < other.num_vars; ++j) set_bounds(j + col_offset, other.lower[j], other.upper[j]);
}

LinearConstraintSet ConstraintBuilder::build() const {
  LinearConstraintSet out;
  out.num_vars = num_vars_;
  out.eq_matrix = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(eq_.size()), num_vars_);
  out.eq_rhs.resize(static_cast<Eigen::Index>(eq_.size()));
  for (std::size_t i = 0; i < eq_.size(); ++i) {
    for (const auto& [c, v] : eq_[i].terms) out.eq_matrix(i, c) += v;
    out.eq_rhs[i] = eq_[i].rhs;
    out.eq_tags.push_back(eq_[i].tag);
  }
  out.in_matrix = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(le_.size()), num_vars_);
  out.in_rhs.resize(static_cast<Eigen::Index>(le_.size()));
  for (std::size_t i = 0; i < le_.size(); ++i) {
    for (const auto& [c, v] : le_[i].terms) out.in_matrix(i, c) += v;
    out.in_rhs[i] = le_[i].rhs;
    out.in_tags.push_back(le_[i].tag);
    out.in_sense.push_back(Sense::LessEqual);
  }
  out.lower = Eigen::Map<const Eigen::VectorXd>(lower_.data(), num_vars_);
  out.upper = Eigen::Map<const Eigen::VectorXd>(upper_.data(), num_vars_);
  return out;
}

// ---- per-user constraints ---------------------------------------------------

LinearConstraintSet build_user_constraints(const scenario::Scenario& s, int n, Mode mode) {
  check_user(s, n);
  const int T = s.horizon();
  const auto& u = s.users[n];
  const auto& ev = u.ev;
  const UserLayout L(mode, T, s.num_users());
  ConstraintBuilder b(L.size());
  const std::span<const int> shift = s.grid.shift_slots[n];
  const std::span<const int> dr = s.grid.dr_slots;
  auto in_ev_window = [&](int t) { return t >= ev.arrival && t <= ev.departure; };

  for (int t = 0; t < T; ++t) {
    b.set_bounds(L.index(Var::HvacLoad, t), 0.0, kInf);
    b.set_bounds(L.index(Var::ShiftLoad, t), 0.0, contains(shift, t) ? kInf : 0.0);
    b.set_bounds(L.index(Var::CurtailLoad, t), 0.0, u.curtailable_plan[t]);
    b.set_bounds(L.index(Var::GridSupply, t), 0.0, s.tariff.line_cap);
    b.set_bounds(L.index(Var::RenewableSupply, t), 0.0, u.renewable_cap[t]);
    const bool ev_in = in_ev_window(t);
    b.set_bounds(L.index(Var::EvCharge, t), 0.0, ev_in ? ev.max_charge : 0.0);
    b.set_bounds(L.index(Var::EvDischarge, t), 0.0, ev_in ? ev.max_discharge : 0.0);
    b.set_bounds(L.index(Var::EvEnergy, t), 0.0, ev_in ? ev.capacity : 0.0);
    b.set_bounds(L.index(Var::IndoorTemp, t), u.indoor_min, u.indoor_max);
    if (has_vertical(mode)) {
      b.set_bounds(L.index(Var::FeedIn, t), 0.0, u.renewable_cap[t]);
      b.set_bounds(L.index(Var::DemandResponse, t), 0.0, contains(dr, t) ? s.tariff.line_cap : 0.0);
    }
  }
  b.set_bounds(L.index(Var::Peak), 0.0, kInf);

  if (!shift.empty()) {
    std::vector<ConstraintBuilder::Term> terms;
    double total = 0.0;
    for (int t : shift) {
      terms.emplace_back(L.index(Var::ShiftLoad, t), 1.0);
      total += u.shiftable_pref[t];
    }
    b.add_eq(RowTag::ShiftTotal, std::move(terms), total);
  }

  const double alpha = s.hvac.alpha, beta = s.hvac.beta;
  for (int t = 0; t < T; ++t) {
    std::vector<ConstraintBuilder::Term> terms{{L.index(Var::IndoorTemp, t), 1.0},
                                               {L.index(Var::HvacLoad, t), -alpha}};
    double rhs = beta * u.outdoor_temp[t];
    if (t == 0)
      rhs += (1.0 - beta) * u.indoor_initial;
    else
      terms.emplace_back(L.index(Var::IndoorTemp, t - 1), -(1.0 - beta));
    b.add_eq(RowTag::HvacDynamics, std::move(terms), rhs);
  }

  for (int t = ev.arrival; t <= ev.departure; ++t) {
    std::vector<ConstraintBuilder::Term> terms{{L.index(Var::EvEnergy, t), 1.0},
                                               {L.index(Var::EvCharge, t), -ev.charge_efficiency},
                                               {L.index(Var::EvDischarge, t), 1.0 / ev.discharge_efficiency}};
    double rhs = 0.0;
    if (t == ev.arrival)
      rhs = ev.initial_energy;
    else
      terms.emplace_back(L.index(Var::EvEnergy, t - 1), -1.0);
    b.add_eq(RowTag::EvDynamics, std::move(terms), rhs);
  }
  b.add_eq(RowTag::EvTerminal, {{L.index(Var::EvEnergy, ev.departure), 1.0}}, ev.capacity);

  if (has_vertical(mode)) {
    for (int t = 0; t < T; ++t)
      b.add_le(RowTag::RenewableShare,
               {{L.index(Var::RenewableSupply, t), 1.0}, {L.index(Var::FeedIn, t), 1.0}}, u.renewable_cap[t]);
    for (int t : dr)
      b.add_le(RowTag::DrCap, {{L.index(Var::DemandResponse, t), 1.0}, {L.index(Var::GridSupply, t), -1.0}}, 0.0);
  }

  for (int t = 0; t < T; ++t)
    b.add_le(RowTag::PeakEpigraph, {{L.index(Var::GridSupply, t), 1.0}, {L.index(Var::Peak), -1.0}}, 0.0);

  const RowTag balance_tag = mode == Mode::Tem   ? RowTag::BalanceTem
                             : mode == Mode::Bs1 ? RowTag::BalanceBs1
                             : mode == Mode::Bs2 ? RowTag::BalanceBs2
                                                 : RowTag::BalanceBs3;
  for (int t = 0; t < T; ++t) {
    std::vector<ConstraintBuilder::Term> terms{
        {L.index(Var::HvacLoad, t), 1.0},         {L.index(Var::ShiftLoad, t), 1.0},
        {L.index(Var::CurtailLoad, t), 1.0},      {L.index(Var::EvCharge, t), 1.0},
        {L.index(Var::RenewableSupply, t), -1.0}, {L.index(Var::GridSupply, t), -1.0},
        {L.index(Var::EvDischarge, t), -1.0}};
    if (has_vertical(mode)) terms.emplace_back(L.index(Var::DemandResponse, t), 1.0);
    for (int p = 0; p < L.num_peers(); ++p) terms.emplace_back(L.trade_index(p, t), 1.0);
    b.add_eq(balance_tag, std::move(terms), -u.inflexible[t]);
  }
  return b.build();
}

QuadraticObjective build_user_objective(const scenario::Scenario& s, int n, Mode mode) {
  check_user(s, n);
  const int T = s.horizon();
  const auto& u = s.users[n];
  const UserLayout L(mode, T, s.num_users());
  QuadraticObjective obj;
  obj.P = Eigen::MatrixXd::Zero(L.size(), L.size());
  obj.q = Eigen::VectorXd::Zero(L.size());

  auto square = [&](int col, double weight, double target) {
    // weight * (x - target)^2
    obj.P(col, col) += 2.0 * weight;
    obj.q[col] -= 2.0 * weight * target;
    obj.constant += weight * target * target;
  };
  for (int t : s.grid.shift_slots[n]) square(L.index(Var::ShiftLoad, t), u.sensitivity.shift, u.shiftable_pref[t]);
  for (int t = 0; t < T; ++t) {
    square(L.index(Var::CurtailLoad, t), u.sensitivity.curtail, u.curtailable_plan[t]);
    square(L.index(Var::IndoorTemp, t), u.sensitivity.comfort, u.setpoint[t]);
    obj.q[L.index(Var::GridSupply, t)] += s.tariff.energy_price;
  }
  obj.q[L.index(Var::Peak)] += s.tariff.peak_price;
  for (int t = u.ev.arrival; t <= u.ev.departure; ++t) square(L.index(Var::EvDischarge, t), u.ev.degradation, 0.0);

  if (has_vertical(mode)) {
    for (int t = 0; t < T; ++t) obj.q[L.index(Var::FeedIn, t)] -= s.prices.feed_in[t];
    for (int t : s.grid.dr_slots) obj.q[L.index(Var::DemandResponse, t)] -= s.prices.demand_response[t];
  }
  for (int p = 0; p < L.num_peers(); ++p)
    for (int t = 0; t < T; ++t) obj.q[L.trade_index(p, t)] -= s.prices.trading[t];
  return obj;
}

}  // namespace gridledger::energy
