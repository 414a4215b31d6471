#pragma once

// Seeded discrete-event network for chain nodes.
//
// Events are totally ordered by (time, sequence number). Each directed link
// delivers in send order, as a stream transport would. Timers never touch
// the network.

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <random>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "gridledger/chain/consensus.hpp"

namespace gridledger::netsim {

using chain::NodeId;

struct LatencyModel {
  enum class Kind { Fixed, Uniform };
  Kind kind = Kind::Uniform;
  double min_ms = 1.0;
  double max_ms = 10.0;  // Uniform only

  static LatencyModel fixed(double ms) { return {Kind::Fixed, ms, ms}; }
  static LatencyModel uniform(double lo_ms, double hi_ms) { return {Kind::Uniform, lo_ms, hi_ms}; }
};

struct NetConfig {
  LatencyModel latency;
  std::optional<double> bandwidth_bps;  // serialization delay bytes*8/rate added to latency
  double drop_probability = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t event_budget = 10'000'000;
  bool capture_wire = false;  // keep the encoded bytes of every network send

  // Throws std::invalid_argument on negative latency, an inverted range, a
  // non-positive bandwidth or a drop probability outside [0, 1).
  void validate() const;
};

struct CrashAt {
  std::int64_t time_us = 0;
};

// Links between the faulted node and every member of `peers` drop all
// messages sent during [start_us, end_us).
struct Partition {
  std::vector<NodeId> peers;
  std::int64_t start_us = 0;
  std::int64_t end_us = 0;
};

using Fault = std::variant<CrashAt, Partition>;

enum class EventKind { Send, Deliver, Drop, Timeout, Commit };

std::string_view to_string(EventKind k);

struct TraceEvent {
  std::int64_t time_us = 0;
  EventKind event = EventKind::Send;
  NodeId src = 0;
  NodeId dst = 0;
  chain::MsgType type = chain::MsgType::ClientTx;  // unused for commits
  std::uint64_t bytes = 0;
  std::uint64_t height = 0;      // message height, or committed height
  std::int64_t latency_us = 0;   // commits: time since the block was proposed
};

struct Trace {
  std::vector<TraceEvent> events;
  std::array<std::uint64_t, chain::kNumMsgTypes> sends_by_type{};
  std::array<std::uint64_t, chain::kNumMsgTypes> bytes_by_type{};
  std::uint64_t sends = 0, delivers = 0, drops = 0, timeouts = 0, commits = 0;

  void record(const TraceEvent& e);
};

// A `#schema=` line, then `time,event,src,dst,msg_type,bytes` with time in
// microseconds. Commit rows carry msg_type "block" and 0 bytes.
void write_trace_csv(const Trace& t, std::ostream& os);

struct Metrics {
  std::array<std::uint64_t, chain::kNumMsgTypes> messages{};
  std::array<std::uint64_t, chain::kNumMsgTypes> bytes{};
  std::map<NodeId, std::uint64_t> bytes_sent;
  std::map<NodeId, std::uint64_t> bytes_received;
  std::uint64_t sends = 0, delivers = 0, drops = 0, timeouts = 0, commits = 0;
  std::uint64_t consensus_messages = 0;
  std::map<std::uint64_t, std::uint64_t> consensus_by_height;  // sends of consensus types, keyed by message height
  std::map<std::uint64_t, std::uint64_t> bytes_by_height;
  double mean_commit_latency_us = 0.0;
  std::int64_t end_time_us = 0;
};

Metrics metrics(const Trace& t);

std::string metrics_json(const Metrics& m);

// A network participant.
class Process {
 public:
  virtual ~Process() = default;
  virtual NodeId id() const = 0;
  virtual void start(std::int64_t now_us, chain::Outbox& out) = 0;
  virtual void receive(const chain::Message& m, std::int64_t now_us, chain::Outbox& out) = 0;
  virtual const chain::NodeState& node() const = 0;
};

// A replica driven by chain::step.
class ChainProcess : public Process {
 public:
  ChainProcess(NodeId id, chain::Role role, std::shared_ptr<const chain::ConsensusConfig> cfg);

  NodeId id() const override { return state_.id; }
  void start(std::int64_t now_us, chain::Outbox& out) override;
  void receive(const chain::Message& m, std::int64_t now_us, chain::Outbox& out) override;
  const chain::NodeState& node() const override { return state_; }

 protected:
  chain::NodeState state_;
  std::shared_ptr<const chain::ConsensusConfig> cfg_;
};

class LivenessTimeout : public std::runtime_error {
 public:
  LivenessTimeout(const std::string& what, std::uint64_t events, std::int64_t time_us, std::uint64_t min_height,
                  std::uint64_t max_height);

  std::uint64_t events() const { return events_; }
  std::int64_t time_us() const { return time_us_; }
  std::uint64_t min_height() const { return min_height_; }  // over live validators
  std::uint64_t max_height() const { return max_height_; }

 private:
  std::uint64_t events_;
  std::int64_t time_us_;
  std::uint64_t min_height_, max_height_;
};

class Simulator;

struct StopCondition {
  std::optional<std::int64_t> time_us;  // run every event up to this instant
  std::optional<std::uint64_t> height;  // every live validator has committed this many blocks
  std::function<bool(const Simulator&)> predicate;

  static StopCondition at_time(std::int64_t t) { return {t, std::nullopt, {}}; }
  static StopCondition at_height(std::uint64_t h) { return {std::nullopt, h, {}}; }
  static StopCondition when(std::function<bool(const Simulator&)> f) { return {std::nullopt, std::nullopt, std::move(f)}; }
};

class Simulator {
 public:
  explicit Simulator(NetConfig cfg);

  // Ids must be unique. Validator membership is read from the node state.
  void add(std::unique_ptr<Process> p);

  // Throws std::invalid_argument for an unknown node.
  void inject_fault(NodeId node, const Fault& fault);

  // Runs until `stop` holds; throws LivenessTimeout when the event budget is
  // spent or no event is left. Can be called repeatedly.
  const Trace& run_until(const StopCondition& stop);

  std::int64_t now() const { return now_; }
  std::uint64_t events_processed() const { return processed_; }
  std::uint64_t in_flight() const { return in_flight_; }
  const Trace& trace() const { return trace_; }
  const std::vector<chain::Bytes>& wire() const { return wire_; }

  std::vector<NodeId> node_ids() const;
  const Process& process(NodeId id) const;
  Process& process(NodeId id);
  bool crashed(NodeId id) const;  // as of now()
  std::vector<NodeId> live_validators() const;
  std::uint64_t min_validator_height() const;

 private:
  struct Event {
    std::int64_t time;
    std::uint64_t seq;
    NodeId dst;
    bool timer;
    chain::Message msg;
    std::uint64_t bytes;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
  };

  void start_all();
  void dispatch(NodeId from, chain::Outbox out);
  bool partitioned(NodeId a, NodeId b, std::int64_t t) const;
  std::int64_t sample_latency(std::uint64_t bytes);
  void log_commits(NodeId node, std::uint64_t before);
  bool satisfied(const StopCondition& stop) const;

  NetConfig cfg_;
  std::mt19937_64 rng_;
  std::map<NodeId, std::unique_ptr<Process>> nodes_;
  std::map<NodeId, std::int64_t> crash_at_;
  std::vector<std::pair<NodeId, Partition>> partitions_;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::map<std::pair<NodeId, NodeId>, std::int64_t> link_clear_;
  std::uint64_t seq_ = 0;
  std::int64_t now_ = 0;
  std::uint64_t processed_ = 0;
  std::uint64_t in_flight_ = 0;
  bool started_ = false;
  Trace trace_;
  std::vector<chain::Bytes> wire_;
};

}  // namespace gridledger::netsim
