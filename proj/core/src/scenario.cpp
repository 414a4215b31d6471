#include "gridledger/scenario.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include <json.hpp>

namespace gridledger::scenario {

namespace fs = std::filesystem;
using nlohmann::json;

ScenarioError::ScenarioError(std::string file, int row, std::string field, const std::string& what)
    : std::runtime_error(file + (row > 0 ? ":" + std::to_string(row) : std::string()) +
                         (field.empty() ? std::string() : " [" + field + "]") + ": " + what),
      file_(std::move(file)),
      row_(row),
      field_(std::move(field)) {}

namespace {

constexpr const char* kSeriesHeader = "user,slot,L_S,L_C,l_I,S_R,Tout,Tref,p_FIT,p_DR,p_T";
constexpr const char* kSchema = "gridledger.scenario/1";

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

// Uniform double in [0, 1) from the top 53 bits; independent of the
// standard library's distribution implementations.
class SplitRng {
 public:
  explicit SplitRng(std::uint64_t seed) : gen_(seed) {}
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int uniform_int(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(uniform() * (hi - lo + 1));
  }

 private:
  std::mt19937_64 gen_;
};

double hour_of_day(int t, int horizon) {
  if (horizon >= 24) return static_cast<double>(t % 24);
  return 24.0 * t / horizon;
}

std::vector<int> slot_range(int first, int last) {
  std::vector<int> out;
  for (int t = first; t <= last; ++t) out.push_back(t);
  return out;
}

// ---- config parsing helpers -------------------------------------------------

struct ConfigReader {
  std::string file;

  [[noreturn]] void fail(const std::string& field, const std::string& what) const {
    throw ScenarioError(file, 0, field, what);
  }

  double number(const json& obj, const char* key, double fallback, const std::string& ctx) const {
    if (!obj.contains(key)) return fallback;
    const auto& v = obj.at(key);
    if (!v.is_number()) fail(ctx + key, "expected a number");
    return v.get<double>();
  }

  int integer(const json& obj, const char* key, const std::string& ctx) const {
    if (!obj.contains(key)) fail(ctx + key, "missing required key");
    const auto& v = obj.at(key);
    if (!v.is_number_integer()) fail(ctx + key, "expected an integer");
    return v.get<int>();
  }

  // Accepts [first, last] (inclusive, 1-based) under `range_key` or an
  // explicit 1-based list under `list_key`. Returns 0-based slots.
  std::optional<std::vector<int>> slots(const json& obj, const char* range_key,
                                        const char* list_key, const std::string& ctx) const {
    if (obj.contains(list_key)) {
      const auto& v = obj.at(list_key);
      if (!v.is_array()) fail(ctx + list_key, "expected an array of slot numbers");
      std::vector<int> out;
      for (const auto& e : v) {
        if (!e.is_number_integer()) fail(ctx + list_key, "expected integer slot numbers");
        out.push_back(e.get<int>() - 1);
      }
      std::sort(out.begin(), out.end());
      out.erase(std::unique(out.begin(), out.end()), out.end());
      return out;
    }
    if (obj.contains(range_key)) {
      const auto& v = obj.at(range_key);
      if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer())
        fail(ctx + range_key, "expected [first, last]");
      int first = v[0].get<int>(), last = v[1].get<int>();
      if (first > last) fail(ctx + range_key, "first slot after last slot");
      return slot_range(first - 1, last - 1);
    }
    return std::nullopt;
  }
};

struct UserOverrides {
  std::optional<double> tin0;
  std::optional<std::pair<double, double>> tin_range;
  std::optional<std::vector<int>> shift_slots;
  json sensitivities = json::object();
  json ev = json::object();
};

UserOverrides read_user(const ConfigReader& r, const json& obj, const std::string& ctx) {
  UserOverrides u;
  if (!obj.is_object()) r.fail(ctx, "expected an object");
  if (obj.contains("tin0")) u.tin0 = r.number(obj, "tin0", 0.0, ctx);
  if (obj.contains("tin_range")) {
    const auto& v = obj.at("tin_range");
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
      r.fail(ctx + "tin_range", "expected [low, high]");
    u.tin_range = std::make_pair(v[0].get<double>(), v[1].get<double>());
  }
  u.shift_slots = r.slots(obj, "shift_window", "shift_slots", ctx);
  if (obj.contains("sensitivities")) u.sensitivities = obj.at("sensitivities");
  if (obj.contains("ev")) u.ev = obj.at("ev");
  return u;
}

void apply_overrides(const ConfigReader& r, const UserOverrides& o, UserScenario& u,
                     std::vector<int>& shift, const std::string& ctx) {
  if (o.tin0) u.indoor_initial = *o.tin0;
  if (o.tin_range) {
    u.indoor_min = o.tin_range->first;
    u.indoor_max = o.tin_range->second;
  }
  if (o.shift_slots) shift = *o.shift_slots;
  const std::string sctx = ctx + "sensitivities.";
  u.sensitivity.shift = r.number(o.sensitivities, "omega_s", u.sensitivity.shift, sctx);
  u.sensitivity.curtail = r.number(o.sensitivities, "omega_c", u.sensitivity.curtail, sctx);
  u.sensitivity.comfort = r.number(o.sensitivities, "omega_a", u.sensitivity.comfort, sctx);
  const std::string ectx = ctx + "ev.";
  auto& ev = u.ev;
  ev.capacity = r.number(o.ev, "capacity", ev.capacity, ectx);
  ev.initial_energy = r.number(o.ev, "e0", ev.initial_energy, ectx);
  ev.max_charge = r.number(o.ev, "p_cha", ev.max_charge, ectx);
  ev.max_discharge = r.number(o.ev, "p_dis", ev.max_discharge, ectx);
  ev.charge_efficiency = r.number(o.ev, "mu", ev.charge_efficiency, ectx);
  ev.discharge_efficiency = r.number(o.ev, "nu", ev.discharge_efficiency, ectx);
  ev.degradation = r.number(o.ev, "omega_v", ev.degradation, ectx);
  if (o.ev.contains("window")) {
    const auto& v = o.ev.at("window");
    if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer())
      r.fail(ectx + "window", "expected [arrival, departure]");
    ev.arrival = v[0].get<int>() - 1;
    ev.departure = v[1].get<int>() - 1;
  }
}

bool has_key(const json& obj, const char* key) { return obj.is_object() && obj.contains(key); }

// ---- CSV --------------------------------------------------------------------

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

double parse_double(const std::string& text, const std::string& file, int row, const std::string& field) {
  std::string t = trim(text);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw ScenarioError(file, row, field, "malformed number '" + text + "'");
  return v;
}

int parse_int(const std::string& text, const std::string& file, int row, const std::string& field) {
  std::string t = trim(text);
  int v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw ScenarioError(file, row, field, "malformed integer '" + text + "'");
  return v;
}

void read_series(const fs::path& path, Scenario& s) {
  const std::string file = path.string();
  std::ifstream in(path);
  if (!in) throw ScenarioError(file, 0, "", "cannot open series file");
  const int n_users = s.num_users();
  const int horizon = s.horizon();

  std::string line;
  int row = 1;
  if (!std::getline(in, line) || trim(line) != kSeriesHeader)
    throw ScenarioError(file, 1, "header", std::string("expected header '") + kSeriesHeader + "'");

  static const char* kColumns[] = {"user", "slot", "L_S", "L_C", "l_I", "S_R",
                                   "Tout", "Tref", "p_FIT", "p_DR", "p_T"};
  std::vector<std::vector<bool>> seen(n_users, std::vector<bool>(horizon, false));
  std::vector<std::vector<bool>> price_set(3, std::vector<bool>(horizon, false));
  Series* price_series[3] = {&s.prices.feed_in, &s.prices.demand_response, &s.prices.trading};
  for (auto* p : price_series) p->assign(horizon, 0.0);
  for (auto& u : s.users) {
    for (Series* v : {&u.shiftable_pref, &u.curtailable_plan, &u.inflexible, &u.renewable_cap,
                      &u.outdoor_temp, &u.setpoint})
      v->assign(horizon, 0.0);
  }

  std::vector<int> rows_per_user(n_users, 0);
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    auto cells = split_csv(line);
    if (cells.size() != 11)
      throw ScenarioError(file, row, "", "expected 11 columns, found " + std::to_string(cells.size()));
    int user = parse_int(cells[0], file, row, "user");
    int slot = parse_int(cells[1], file, row, "slot");
    if (user < 1 || user > n_users)
      throw ScenarioError(file, row, "user", "user " + std::to_string(user) + " outside 1.." + std::to_string(n_users));
    if (slot < 1 || slot > horizon)
      throw ScenarioError(file, row, "slot", "series length mismatch: slot " + std::to_string(slot) +
                                                 " outside 1.." + std::to_string(horizon));
    const int n = user - 1, t = slot - 1;
    if (seen[n][t]) throw ScenarioError(file, row, "slot", "duplicate (user, slot) row");
    seen[n][t] = true;
    ++rows_per_user[n];
    double v[9];
    for (int c = 0; c < 9; ++c) v[c] = parse_double(cells[c + 2], file, row, kColumns[c + 2]);
    auto& u = s.users[n];
    u.shiftable_pref[t] = v[0];
    u.curtailable_plan[t] = v[1];
    u.inflexible[t] = v[2];
    u.renewable_cap[t] = v[3];
    u.outdoor_temp[t] = v[4];
    u.setpoint[t] = v[5];
    for (int p = 0; p < 3; ++p) {
      if (price_set[p][t] && (*price_series[p])[t] != v[6 + p])
        throw ScenarioError(file, row, kColumns[8 + p], "price differs across users for the same slot");
      (*price_series[p])[t] = v[6 + p];
      price_set[p][t] = true;
    }
  }
  for (int n = 0; n < n_users; ++n) {
    if (rows_per_user[n] != horizon)
      throw ScenarioError(file, row, "slot",
                          "series length mismatch: user " + std::to_string(n + 1) + " has " +
                              std::to_string(rows_per_user[n]) + " rows, horizon is " + std::to_string(horizon));
  }
}

json slots_to_json(const std::vector<int>& slots) {
  json out = json::array();
  for (int t : slots) out.push_back(t + 1);
  return out;
}

}  // namespace

Scenario load_scenario(const fs::path& config_path) {
  ConfigReader r{config_path.string()};
  std::ifstream in(config_path);
  if (!in) r.fail("", "cannot open config file");
  json cfg;
  try {
    cfg = json::parse(in);
  } catch (const json::parse_error& e) {
    r.fail("", std::string("malformed config: ") + e.what());
  }
  if (!cfg.is_object()) r.fail("", "config must be a JSON object");

  Scenario s;
  const int n_users = r.integer(cfg, "n_users", "");
  const int horizon = r.integer(cfg, "horizon", "");
  if (n_users < 1) r.fail("n_users", "must be at least 1");
  if (horizon < 1) r.fail("horizon", "must be at least 1");
  s.grid.horizon = horizon;
  s.grid.slot_hours = r.number(cfg, "slot_hours", 1.0, "");
  if (has_key(cfg, "rng_seed")) {
    if (!cfg.at("rng_seed").is_number_unsigned()) r.fail("rng_seed", "expected a non-negative integer");
    s.rng_seed = cfg.at("rng_seed").get<std::uint64_t>();
  }
  if (has_key(cfg, "hvac")) {
    s.hvac.alpha = r.number(cfg["hvac"], "alpha", s.hvac.alpha, "hvac.");
    s.hvac.beta = r.number(cfg["hvac"], "beta", s.hvac.beta, "hvac.");
  }
  if (has_key(cfg, "tariff")) {
    s.tariff.energy_price = r.number(cfg["tariff"], "p_g", s.tariff.energy_price, "tariff.");
    s.tariff.peak_price = r.number(cfg["tariff"], "p_g_peak", s.tariff.peak_price, "tariff.");
    s.tariff.line_cap = r.number(cfg["tariff"], "s_g", s.tariff.line_cap, "tariff.");
  }
  s.grid.dr_slots = r.slots(cfg, "dr_window", "dr_slots", "").value_or(std::vector<int>{});

  if (!has_key(cfg, "series_file") || !cfg.at("series_file").is_string())
    r.fail("series_file", "missing required key");
  const fs::path series_path = config_path.parent_path() / cfg.at("series_file").get<std::string>();

  s.users.resize(n_users);
  read_series(series_path, s);

  UserOverrides defaults;
  if (has_key(cfg, "defaults")) defaults = read_user(r, cfg.at("defaults"), "defaults.");
  std::vector<UserOverrides> per_user(n_users);
  if (has_key(cfg, "users")) {
    const auto& arr = cfg.at("users");
    if (!arr.is_array() || static_cast<int>(arr.size()) != n_users)
      r.fail("users", "expected an array with one entry per user");
    for (int n = 0; n < n_users; ++n)
      per_user[n] = read_user(r, arr[n], "users[" + std::to_string(n + 1) + "].");
  }

  s.grid.shift_slots.assign(n_users, slot_range(0, horizon - 1));
  for (int n = 0; n < n_users; ++n) {
    auto& u = s.users[n];
    const std::string ctx = "users[" + std::to_string(n + 1) + "].";
    u.indoor_initial = u.setpoint.empty() ? u.indoor_initial : u.setpoint.front();
    apply_overrides(r, defaults, u, s.grid.shift_slots[n], ctx);
    const bool e0_given = has_key(defaults.ev, "e0") || has_key(per_user[n].ev, "e0");
    apply_overrides(r, per_user[n], u, s.grid.shift_slots[n], ctx);
    if (!e0_given && !has_key(per_user[n].ev, "e0")) u.ev.initial_energy = 0.5 * u.ev.capacity;
  }

  auto report = validate_scenario(s);
  if (!report.empty()) {
    const auto& v = report.front();
    std::string field = v.user >= 0 ? "users[" + std::to_string(v.user + 1) + "]." + v.field : v.field;
    throw ScenarioError(r.file, 0, field, v.message);
  }
  return s;
}

fs::path write_scenario(const Scenario& s, const fs::path& dir, const std::string& stem) {
  fs::create_directories(dir);
  const std::string series_name = stem + "_series.csv";
  json cfg;
  cfg["schema"] = kSchema;
  cfg["n_users"] = s.num_users();
  cfg["horizon"] = s.horizon();
  cfg["slot_hours"] = s.grid.slot_hours;
  cfg["rng_seed"] = s.rng_seed;
  cfg["hvac"] = {{"alpha", s.hvac.alpha}, {"beta", s.hvac.beta}};
  cfg["tariff"] = {{"p_g", s.tariff.energy_price},
                   {"p_g_peak", s.tariff.peak_price},
                   {"s_g", s.tariff.line_cap}};
  cfg["dr_slots"] = slots_to_json(s.grid.dr_slots);
  cfg["series_file"] = series_name;
  json users = json::array();
  for (int n = 0; n < s.num_users(); ++n) {
    const auto& u = s.users[n];
    json ju;
    ju["tin0"] = u.indoor_initial;
    ju["tin_range"] = {u.indoor_min, u.indoor_max};
    ju["shift_slots"] = slots_to_json(s.grid.shift_slots[n]);
    ju["sensitivities"] = {{"omega_s", u.sensitivity.shift},
                           {"omega_c", u.sensitivity.curtail},
                           {"omega_a", u.sensitivity.comfort}};
    ju["ev"] = {{"capacity", u.ev.capacity},
                {"e0", u.ev.initial_energy},
                {"p_cha", u.ev.max_charge},
                {"p_dis", u.ev.max_discharge},
                {"mu", u.ev.charge_efficiency},
                {"nu", u.ev.discharge_efficiency},
                {"omega_v", u.ev.degradation},
                {"window", {u.ev.arrival + 1, u.ev.departure + 1}}};
    users.push_back(std::move(ju));
  }
  cfg["users"] = std::move(users);

  const fs::path config_path = dir / (stem + ".json");
  std::ofstream(config_path) << cfg.dump(2) << '\n';

  std::ofstream csv(dir / series_name);
  csv << kSeriesHeader << '\n';
  for (int n = 0; n < s.num_users(); ++n) {
    const auto& u = s.users[n];
    for (int t = 0; t < s.horizon(); ++t) {
      csv << n + 1 << ',' << t + 1;
      for (double v : {u.shiftable_pref[t], u.curtailable_plan[t], u.inflexible[t], u.renewable_cap[t],
                       u.outdoor_temp[t], u.setpoint[t], s.prices.feed_in[t],
                       s.prices.demand_response[t], s.prices.trading[t]})
        csv << ',' << format_double(v);
      csv << '\n';
    }
  }
  return config_path;
}

Scenario generate_synthetic(std::uint64_t seed, int num_users, int horizon) {
  if (num_users < 1) throw std::invalid_argument("generate_synthetic: num_users must be >= 1");
  if (horizon < 2) throw std::invalid_argument("generate_synthetic: horizon must be >= 2");

  SplitRng rng(seed);
  Scenario s;
  s.rng_seed = seed;
  s.grid.horizon = horizon;
  s.grid.slot_hours = 1.0;

  auto bump = [](double h, double center, double width) {
    double d = (h - center) / width;
    return std::exp(-d * d);
  };
  auto solar = [](double h) {
    if (h <= 6.0 || h >= 18.0) return 0.0;
    return std::sin(std::numbers::pi * (h - 6.0) / 12.0);
  };

  for (int t = 0; t < horizon; ++t) {
    double h = hour_of_day(t, horizon);
    if (h >= 17.0 && h < 21.0) s.grid.dr_slots.push_back(t);
  }

  s.prices.feed_in.assign(horizon, 0.08);
  s.prices.trading.assign(horizon, 0.14);
  s.prices.demand_response.assign(horizon, 0.0);
  for (int t : s.grid.dr_slots) s.prices.demand_response[t] = 0.25;

  s.users.resize(num_users);
  s.grid.shift_slots.resize(num_users);
  for (int n = 0; n < num_users; ++n) {
    auto& u = s.users[n];
    const double pv_peak = rng.uniform(0.5, 4.0);
    const double curtail_scale = rng.uniform(0.3, 1.0);
    const double base_load = rng.uniform(0.3, 0.6);
    const double temp_offset = rng.uniform(-1.0, 1.0);

    const int window_len = std::max(2, std::min(horizon, horizon / 3));
    const int latest_start = horizon - window_len;
    int start = static_cast<int>(horizon * rng.uniform(10.0, 14.0) / 24.0);
    start = std::clamp(start, 0, latest_start);
    s.grid.shift_slots[n] = slot_range(start, start + window_len - 1);
    const int pref_len = window_len >= 4 ? 2 : 1;
    const int pref_start = start + rng.uniform_int(0, window_len - pref_len);
    const double pref_amount = rng.uniform(1.0, 2.0);

    u.shiftable_pref.assign(horizon, 0.0);
    for (int t = pref_start; t < pref_start + pref_len; ++t) u.shiftable_pref[t] = pref_amount;

    u.curtailable_plan.resize(horizon);
    u.inflexible.resize(horizon);
    u.renewable_cap.resize(horizon);
    u.outdoor_temp.resize(horizon);
    u.setpoint.assign(horizon, 24.0);
    for (int t = 0; t < horizon; ++t) {
      const double h = hour_of_day(t, horizon);
      u.curtailable_plan[t] = curtail_scale * (0.3 + 0.7 * bump(h, 19.0, 3.0));
      u.inflexible[t] = base_load * rng.uniform(0.8, 1.2) + 0.5 * bump(h, 7.5, 1.5);
      u.renewable_cap[t] = pv_peak * solar(h) * rng.uniform(0.9, 1.1);
      u.outdoor_temp[t] = 20.0 + temp_offset +
                          6.0 * std::sin(2.0 * std::numbers::pi * (h - 9.0) / 24.0) +
                          rng.uniform(-1.0, 1.0);
    }
    u.indoor_initial = u.setpoint.front();
    u.indoor_min = 15.0;
    u.indoor_max = 32.0;
    u.sensitivity = Sensitivities{};

    u.ev.capacity = rng.uniform(30.0, 50.0);
    u.ev.initial_energy = 0.5 * u.ev.capacity;
    if (horizon >= 18) {
      u.ev.arrival = 8;
      u.ev.departure = 17;
    } else {
      u.ev.arrival = 0;
      u.ev.departure = horizon - 1;
    }
  }
  return s;
}

ValidationReport validate_scenario(const Scenario& s) {
  ValidationReport report;
  auto add = [&](int user, std::string field, std::string message) {
    report.push_back({user, std::move(field), std::move(message)});
  };
  const int T = s.grid.horizon;
  if (s.users.empty()) add(-1, "n_users", "at least one user required");
  if (T < 1) add(-1, "horizon", "horizon must be at least 1");
  if (!(s.grid.slot_hours > 0.0)) add(-1, "slot_hours", "must be positive");
  if (!(s.hvac.alpha >= 0.0) || !std::isfinite(s.hvac.alpha)) add(-1, "alpha", "must be finite and nonnegative");
  if (!std::isfinite(s.hvac.beta)) add(-1, "beta", "must be finite");

  if (!(s.tariff.energy_price >= 0.0)) add(-1, "p_G", "must be nonnegative");
  if (!(s.tariff.peak_price >= 0.0)) add(-1, "p_G_star", "must be nonnegative");
  if (!(s.tariff.line_cap > 0.0)) add(-1, "S_G", "must be positive");

  auto check_series = [&](int user, const char* name, const Series& v, bool nonneg) {
    if (static_cast<int>(v.size()) != T) {
      add(user, name, "series length mismatch: " + std::to_string(v.size()) + " != " + std::to_string(T));
      return;
    }
    for (int t = 0; t < T; ++t) {
      if (!std::isfinite(v[t])) {
        add(user, name, "non-finite value at slot " + std::to_string(t + 1));
        return;
      }
      if (nonneg && v[t] < 0.0) {
        add(user, name, "negative value at slot " + std::to_string(t + 1));
        return;
      }
    }
  };
  check_series(-1, "p_FIT", s.prices.feed_in, true);
  check_series(-1, "p_DR", s.prices.demand_response, true);
  check_series(-1, "p_T", s.prices.trading, true);

  for (int t : s.grid.dr_slots)
    if (t < 0 || t >= T) add(-1, "dr_window", "slot " + std::to_string(t + 1) + " outside horizon");
  if (static_cast<int>(s.grid.shift_slots.size()) != s.num_users())
    add(-1, "shift_window", "one shift window per user required");

  for (int n = 0; n < s.num_users(); ++n) {
    const auto& u = s.users[n];
    check_series(n, "L_S", u.shiftable_pref, true);
    check_series(n, "L_C", u.curtailable_plan, true);
    check_series(n, "l_I", u.inflexible, true);
    check_series(n, "S_R", u.renewable_cap, true);
    check_series(n, "Tout", u.outdoor_temp, false);
    check_series(n, "Tref", u.setpoint, false);
    if (n < static_cast<int>(s.grid.shift_slots.size())) {
      for (int t : s.grid.shift_slots[n])
        if (t < 0 || t >= T) add(n, "shift_window", "slot " + std::to_string(t + 1) + " outside horizon");
    }
    if (!(u.indoor_min < u.indoor_max)) add(n, "Tin_range", "lower bound must be below upper bound");
    if (!(u.indoor_initial >= u.indoor_min && u.indoor_initial <= u.indoor_max))
      add(n, "Tin0", "initial indoor temperature outside tolerable range");
    if (!(u.sensitivity.shift >= 0.0)) add(n, "omega_S", "must be nonnegative");
    if (!(u.sensitivity.curtail >= 0.0)) add(n, "omega_C", "must be nonnegative");
    if (!(u.sensitivity.comfort >= 0.0)) add(n, "omega_A", "must be nonnegative");
    const auto& ev = u.ev;
    if (!(ev.capacity >= 0.0)) add(n, "E_V", "must be nonnegative");
    if (!(ev.initial_energy >= 0.0 && ev.initial_energy <= ev.capacity))
      add(n, "e0", "state of charge outside [0, E_V]");
    if (!(ev.charge_efficiency > 0.0 && ev.charge_efficiency <= 1.0)) add(n, "mu", "must lie in (0, 1]");
    if (!(ev.discharge_efficiency > 0.0 && ev.discharge_efficiency <= 1.0)) add(n, "nu", "must lie in (0, 1]");
    if (!(ev.max_charge >= 0.0)) add(n, "P_cha", "must be nonnegative");
    if (!(ev.max_discharge >= 0.0)) add(n, "P_dis", "must be nonnegative");
    if (!(ev.degradation >= 0.0)) add(n, "omega_V", "must be nonnegative");
    if (ev.arrival < 0 || ev.departure >= T || ev.arrival > ev.departure)
      add(n, "ev_window", "window [" + std::to_string(ev.arrival + 1) + ", " +
                              std::to_string(ev.departure + 1) + "] invalid for horizon");
  }
  return report;
}

std::string format_report(const ValidationReport& report) {
  std::ostringstream out;
  for (const auto& v : report) {
    if (v.user >= 0) out << "user " << v.user + 1 << ": ";
    out << v.field << ": " << v.message << '\n';
  }
  return out.str();
}

}  // namespace gridledger::scenario
