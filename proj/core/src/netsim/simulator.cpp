#include "gridledger/netsim/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <json.hpp>

namespace gridledger::netsim {

namespace {

double unit(std::mt19937_64& rng) { return double(rng() >> 11) * 0x1.0p-53; }

std::size_t type_index(chain::MsgType t) { return static_cast<std::size_t>(t) - 1; }

}  // namespace

void NetConfig::validate() const {
  if (!(latency.min_ms >= 0.0)) throw std::invalid_argument("netsim: latency must be non-negative");
  if (latency.kind == LatencyModel::Kind::Uniform && !(latency.max_ms >= latency.min_ms))
    throw std::invalid_argument("netsim: latency range is inverted");
  if (bandwidth_bps && !(*bandwidth_bps > 0.0)) throw std::invalid_argument("netsim: bandwidth must be positive");
  if (!(drop_probability >= 0.0 && drop_probability < 1.0))
    throw std::invalid_argument("netsim: drop probability must lie in [0, 1)");
}

std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::Send: return "send";
    case EventKind::Deliver: return "deliver";
    case EventKind::Drop: return "drop";
    case EventKind::Timeout: return "timeout";
    case EventKind::Commit: return "commit";
  }
  return "?";
}

void Trace::record(const TraceEvent& e) {
  events.push_back(e);
  switch (e.event) {
    case EventKind::Send:
      ++sends;
      ++sends_by_type[type_index(e.type)];
      bytes_by_type[type_index(e.type)] += e.bytes;
      break;
    case EventKind::Deliver: ++delivers; break;
    case EventKind::Drop: ++drops; break;
    case EventKind::Timeout: ++timeouts; break;
    case EventKind::Commit: ++commits; break;
  }
}

void write_trace_csv(const Trace& t, std::ostream& os) {
  os << "#schema=gridledger.trace/1\n";
  os << "time,event,src,dst,msg_type,bytes\n";
  for (const auto& e : t.events) {
    os << e.time_us << ',' << to_string(e.event) << ',' << e.src << ',' << e.dst << ','
       << (e.event == EventKind::Commit ? std::string_view("block") : chain::to_string(e.type)) << ',' << e.bytes
       << '\n';
  }
}

Metrics metrics(const Trace& t) {
  Metrics m;
  double latency_sum = 0.0;
  for (const auto& e : t.events) {
    m.end_time_us = std::max(m.end_time_us, e.time_us);
    switch (e.event) {
      case EventKind::Send: {
        ++m.sends;
        const std::size_t i = type_index(e.type);
        ++m.messages[i];
        m.bytes[i] += e.bytes;
        m.bytes_sent[e.src] += e.bytes;
        m.bytes_by_height[e.height] += e.bytes;
        if (chain::is_consensus(e.type)) {
          ++m.consensus_messages;
          ++m.consensus_by_height[e.height];
        }
        break;
      }
      case EventKind::Deliver:
        ++m.delivers;
        m.bytes_received[e.dst] += e.bytes;
        break;
      case EventKind::Drop: ++m.drops; break;
      case EventKind::Timeout: ++m.timeouts; break;
      case EventKind::Commit:
        ++m.commits;
        latency_sum += double(e.latency_us);
        break;
    }
  }
  if (m.commits > 0) m.mean_commit_latency_us = latency_sum / double(m.commits);
  return m;
}

std::string metrics_json(const Metrics& m) {
  nlohmann::ordered_json j;
  j["schema"] = "gridledger.metrics/1";
  nlohmann::ordered_json by_type = nlohmann::ordered_json::object();
  for (int i = 0; i < chain::kNumMsgTypes; ++i) {
    if (m.messages[i] == 0) continue;
    const auto name = std::string(chain::to_string(static_cast<chain::MsgType>(i + 1)));
    by_type[name] = {{"messages", m.messages[i]}, {"bytes", m.bytes[i]}};
  }
  j["by_type"] = by_type;
  j["sends"] = m.sends;
  j["delivers"] = m.delivers;
  j["drops"] = m.drops;
  j["timeouts"] = m.timeouts;
  j["commits"] = m.commits;
  j["consensus_messages"] = m.consensus_messages;
  j["mean_commit_latency_us"] = m.mean_commit_latency_us;
  j["end_time_us"] = m.end_time_us;
  nlohmann::ordered_json sent = nlohmann::ordered_json::object();
  for (const auto& [id, b] : m.bytes_sent) sent[std::to_string(id)] = b;
  j["bytes_sent"] = sent;
  return j.dump(2);
}

ChainProcess::ChainProcess(NodeId id, chain::Role role, std::shared_ptr<const chain::ConsensusConfig> cfg)
    : state_(chain::make_node(id, role, *cfg)), cfg_(std::move(cfg)) {}

void ChainProcess::start(std::int64_t now_us, chain::Outbox& out) { out = chain::start(state_, now_us, *cfg_); }

void ChainProcess::receive(const chain::Message& m, std::int64_t now_us, chain::Outbox& out) {
  out = chain::step(state_, m, now_us, *cfg_);
}

LivenessTimeout::LivenessTimeout(const std::string& what, std::uint64_t events, std::int64_t time_us,
                                 std::uint64_t min_height, std::uint64_t max_height)
    : std::runtime_error(what),
      events_(events),
      time_us_(time_us),
      min_height_(min_height),
      max_height_(max_height) {}

Simulator::Simulator(NetConfig cfg) : cfg_(std::move(cfg)), rng_(cfg_.seed) { cfg_.validate(); }

void Simulator::add(std::unique_ptr<Process> p) {
  if (started_) throw std::logic_error("netsim: cannot add nodes after the run started");
  const NodeId id = p->id();
  if (!nodes_.emplace(id, std::move(p)).second)
    throw std::invalid_argument("netsim: duplicate node id " + std::to_string(id));
}

void Simulator::inject_fault(NodeId node, const Fault& fault) {
  if (!nodes_.contains(node)) throw std::invalid_argument("netsim: unknown node " + std::to_string(node));
  if (const auto* c = std::get_if<CrashAt>(&fault)) {
    auto [it, fresh] = crash_at_.emplace(node, c->time_us);
    if (!fresh) it->second = std::min(it->second, c->time_us);
  } else {
    const auto& p = std::get<Partition>(fault);
    for (NodeId peer : p.peers)
      if (!nodes_.contains(peer)) throw std::invalid_argument("netsim: unknown node " + std::to_string(peer));
    if (p.end_us < p.start_us) throw std::invalid_argument("netsim: partition interval is inverted");
    partitions_.emplace_back(node, p);
  }
}

std::vector<NodeId> Simulator::node_ids() const {
  std::vector<NodeId> ids;
  for (const auto& [id, p] : nodes_) ids.push_back(id);
  return ids;
}

const Process& Simulator::process(NodeId id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw std::invalid_argument("netsim: unknown node " + std::to_string(id));
  return *it->second;
}

Process& Simulator::process(NodeId id) {
  return const_cast<Process&>(static_cast<const Simulator&>(*this).process(id));
}

bool Simulator::crashed(NodeId id) const {
  auto it = crash_at_.find(id);
  return it != crash_at_.end() && it->second <= now_;
}

std::vector<NodeId> Simulator::live_validators() const {
  std::vector<NodeId> out;
  for (const auto& [id, p] : nodes_)
    if (p->node().role == chain::Role::Validator && !crashed(id)) out.push_back(id);
  return out;
}

std::uint64_t Simulator::min_validator_height() const {
  std::uint64_t h = UINT64_MAX;
  for (NodeId id : live_validators()) h = std::min<std::uint64_t>(h, process(id).node().ledger.size());
  return h == UINT64_MAX ? 0 : h;
}

bool Simulator::partitioned(NodeId a, NodeId b, std::int64_t t) const {
  for (const auto& [node, p] : partitions_) {
    if (t < p.start_us || t >= p.end_us) continue;
    const bool a_side = node == a && std::find(p.peers.begin(), p.peers.end(), b) != p.peers.end();
    const bool b_side = node == b && std::find(p.peers.begin(), p.peers.end(), a) != p.peers.end();
    if (a_side || b_side) return true;
  }
  return false;
}

std::int64_t Simulator::sample_latency(std::uint64_t bytes) {
  double ms = cfg_.latency.min_ms;
  if (cfg_.latency.kind == LatencyModel::Kind::Uniform)
    ms += (cfg_.latency.max_ms - cfg_.latency.min_ms) * unit(rng_);
  double us = ms * 1000.0;
  if (cfg_.bandwidth_bps) us += double(bytes) * 8.0 / *cfg_.bandwidth_bps * 1e6;
  return std::llround(us);
}

void Simulator::dispatch(NodeId from, chain::Outbox out) {
  for (auto& o : out) {
    if (o.msg.type == chain::MsgType::Timeout) {
      queue_.push(Event{now_ + std::max<std::int64_t>(o.delay_us, 0), seq_++, from, true, std::move(o.msg), 0});
      continue;
    }
    const NodeId to = o.msg.to;
    chain::Bytes bytes = chain::encode_message(o.msg);
    const std::uint64_t size = bytes.size();
    if (cfg_.capture_wire) wire_.push_back(std::move(bytes));
    trace_.record({now_, EventKind::Send, from, to, o.msg.type, size, o.msg.height, 0});
    bool drop = !nodes_.contains(to) || partitioned(from, to, now_);
    if (!drop && cfg_.drop_probability > 0.0) drop = unit(rng_) < cfg_.drop_probability;
    if (drop) {
      trace_.record({now_, EventKind::Drop, from, to, o.msg.type, size, o.msg.height, 0});
      continue;
    }
    std::int64_t& clear = link_clear_[{from, to}];
    const std::int64_t at = std::max(now_ + sample_latency(size), clear);
    clear = at;
    ++in_flight_;
    queue_.push(Event{at, seq_++, to, false, std::move(o.msg), size});
  }
}

void Simulator::log_commits(NodeId node, std::uint64_t before) {
  const auto& ledger = nodes_.at(node)->node().ledger;
  for (std::uint64_t h = before; h < ledger.size(); ++h)
    trace_.record({now_, EventKind::Commit, node, node, chain::MsgType::AggregatedCommit, 0, h,
                   now_ - ledger[h].header.timestamp_us});
}

void Simulator::start_all() {
  started_ = true;
  for (auto& [id, p] : nodes_) {
    if (crashed(id)) continue;
    chain::Outbox out;
    const std::uint64_t before = p->node().ledger.size();
    p->start(now_, out);
    log_commits(id, before);
    dispatch(id, std::move(out));
  }
}

bool Simulator::satisfied(const StopCondition& stop) const {
  if (stop.height && min_validator_height() >= *stop.height && !live_validators().empty()) return true;
  if (stop.predicate && stop.predicate(*this)) return true;
  return false;
}

const Trace& Simulator::run_until(const StopCondition& stop) {
  if (!started_) start_all();
  auto timeout = [&](const std::string& why) {
    std::uint64_t hi = 0;
    for (NodeId id : live_validators()) hi = std::max<std::uint64_t>(hi, process(id).node().ledger.size());
    return LivenessTimeout(why + " after " + std::to_string(processed_) + " events at t=" + std::to_string(now_) +
                               "us (live validator heights " + std::to_string(min_validator_height()) + ".." +
                               std::to_string(hi) + ")",
                           processed_, now_, min_validator_height(), hi);
  };
  while (true) {
    if (satisfied(stop)) return trace_;
    if (queue_.empty()) {
      if (stop.time_us) {
        now_ = std::max(now_, *stop.time_us);
        return trace_;
      }
      throw timeout("no pending events");
    }
    if (stop.time_us && queue_.top().time > *stop.time_us) {
      now_ = *stop.time_us;
      return trace_;
    }
    if (processed_ >= cfg_.event_budget) throw timeout("event budget exhausted");

    Event e = queue_.top();
    queue_.pop();
    now_ = e.time;
    ++processed_;
    if (!e.timer) --in_flight_;
    if (crashed(e.dst)) {
      if (!e.timer) trace_.record({now_, EventKind::Drop, e.msg.from, e.dst, e.msg.type, e.bytes, e.msg.height, 0});
      continue;
    }
    trace_.record({now_, e.timer ? EventKind::Timeout : EventKind::Deliver, e.msg.from, e.dst, e.msg.type, e.bytes,
                   e.msg.height, 0});
    Process& p = *nodes_.at(e.dst);
    const std::uint64_t before = p.node().ledger.size();
    chain::Outbox out;
    p.receive(e.msg, now_, out);
    log_commits(e.dst, before);
    dispatch(e.dst, std::move(out));
  }
}

}  // namespace gridledger::netsim
