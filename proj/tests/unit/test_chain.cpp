#include <gtest/gtest.h>

#include <deque>
#include <map>
#include <random>

#include "gridledger/chain/block.hpp"
#include "gridledger/chain/consensus.hpp"
#include "gridledger/chain/contract.hpp"
#include "gridledger/chain/message.hpp"
#include "gridledger/chain/transaction.hpp"
#include "gridledger/scenario.hpp"
#include "gridledger/tem/admm.hpp"

using namespace gridledger;
using namespace gridledger::chain;

namespace {

const std::vector<NodeId> kFour{0, 1, 2, 3};

Block honest_block(std::uint64_t height, const BlockHeader* parent, std::vector<Transaction> txs) {
  Block b;
  b.header.height = height;
  b.header.parent = parent ? block_digest(*parent) : Digest{};
  b.header.timestamp_us = 1000 * std::int64_t(height);
  b.header.proposer = leader_for(height, kFour);
  b.txs = std::move(txs);
  b.header.tx_root = tx_root(b.txs);
  std::vector<Vote> votes;
  for (NodeId v : {0u, 1u, 2u}) votes.push_back(make_vote(VotePhase::Commit, height, 0, b.digest(), v));
  b.proof = aggregate_votes(votes, 3, VotePhase::Commit, height, 0);
  return b;
}

std::vector<Transaction> sample_txs() {
  return {make_signed(TokenTransfer{4, 5, 7}, 4, 1), make_signed(HorizontalTrade{1, 3, {0.5, -0.25}}, 5, 2),
          make_signed(VerticalTrade{0, {1.0, 2.0}, {0.0, 0.5}}, 4, 2), make_signed(SctCompute{3}, 0, 3)};
}

struct TwoUserContract {
  ContractConfig cfg;
  ContractState cs;

  TwoUserContract() {
    cfg.users = {10, 11};
    cfg.validators = kFour;
    cfg.horizon = 2;
    cfg.admm.rho = tem::RhoSchedule::fixed(1.0);
    cfg.feed_in_price = {0.1, 0.1};
    cfg.dr_price = {0.3, 0.3};
    cfg.trading_price = {0.14, 0.14};
    cfg.dr_slots = {1};
    cfg.initial_user_balance = 1'000;
    cs = ContractState::initial(cfg);
  }
};

// Delivers every message in send order with zero delay; timers fire after
// all pending network traffic. Returns the number of network sends by type.
struct Loop {
  ConsensusConfig cfg;
  std::map<NodeId, NodeState> nodes;
  std::deque<Message> wire;
  std::multimap<std::int64_t, Message> timers;
  std::int64_t now = 0;
  std::map<MsgType, std::map<std::uint64_t, int>> sends;  // type -> height -> count

  explicit Loop(ProtocolMode mode, int n) {
    for (int v = 0; v < n; ++v) cfg.validators.push_back(NodeId(v));
    cfg.mode = mode;
    for (NodeId v : cfg.validators) {
      nodes[v] = make_node(v, Role::Validator, cfg);
      absorb(v, start(nodes[v], 0, cfg));
    }
  }

  void absorb(NodeId from, const Outbox& out) {
    for (const auto& o : out) {
      if (o.msg.type == MsgType::Timeout && o.msg.to == from) {
        timers.emplace(now + o.delay_us, o.msg);
      } else {
        sends[o.msg.type][o.msg.height] += 1;
        wire.push_back(o.msg);
      }
    }
  }

  void run_to_height(std::uint64_t h) {
    auto done = [&] {
      for (auto& [id, s] : nodes)
        if (s.height < h) return false;
      return true;
    };
    for (int guard = 0; !done() && guard < 1'000'000; ++guard) {
      if (!wire.empty()) {
        Message m = wire.front();
        wire.pop_front();
        absorb(m.to, step(nodes[m.to], m, now, cfg));
      } else {
        ASSERT_FALSE(timers.empty());
        auto it = timers.begin();
        now = it->first;
        Message m = it->second;
        timers.erase(it);
        absorb(m.to, step(nodes[m.to], m, now, cfg));
      }
    }
    ASSERT_TRUE(done());
  }

  int consensus_sends(std::uint64_t height) {
    int total = 0;
    for (auto& [type, by_height] : sends)
      if (is_consensus(type) && by_height.contains(height)) total += by_height[height];
    return total;
  }
};

}  // namespace

TEST(Transaction, TransferRoundTripsByteIdentically) {
  const Transaction tx = make_signed(TokenTransfer{4, 9, 5}, 4, 1);
  const Bytes wire = encode_transaction(tx);
  const Transaction back = decode_transaction(wire);
  EXPECT_EQ(back, tx);
  EXPECT_EQ(encode_transaction(back), wire);
}

TEST(Transaction, EveryKindRoundTrips) {
  for (const auto& tx : sample_txs()) EXPECT_EQ(decode_transaction(encode_transaction(tx)), tx);
}

TEST(Transaction, TruncatedBufferFailsToDecode) {
  for (const auto& tx : sample_txs()) {
    const Bytes wire = encode_transaction(tx);
    for (std::size_t cut : {std::size_t(0), std::size_t(1), kTxHeaderSize, wire.size() - 1}) {
      const std::span<const std::uint8_t> part(wire.data(), cut);
      EXPECT_THROW(decode_transaction(part), DecodeError) << to_string(tx.kind()) << " cut " << cut;
    }
  }
}

TEST(Transaction, TrailingBytesFailToDecode) {
  Bytes wire = encode_transaction(sample_txs()[0]);
  wire.push_back(0);
  EXPECT_THROW(decode_transaction(wire), DecodeError);
}

TEST(Transaction, HorizontalTradeLengthFollowsLayout) {
  const Transaction tx = make_signed(HorizontalTrade{1, 2, {1, 2, 3, 4}}, 5, 1);
  // header, user u32, k u64, array count u32 + 4 doubles, signature u32 + bytes
  const std::size_t expected = kTxHeaderSize + 4 + 8 + 4 + 4 * 8 + 4 + default_signer().signature_size();
  EXPECT_EQ(encode_transaction(tx).size(), expected);
}

TEST(Transaction, SignatureBindsSenderAndPayload) {
  Transaction tx = make_signed(TokenTransfer{4, 9, 5}, 4, 1);
  EXPECT_TRUE(verify_signature(tx));
  Transaction forged = tx;
  std::get<TokenTransfer>(forged.payload).amount = 500;
  EXPECT_FALSE(verify_signature(forged));
  forged = tx;
  forged.sender = 5;
  EXPECT_FALSE(verify_signature(forged));
}

TEST(Transaction, AmountsMustBeFiniteAndPositive) {
  EXPECT_FALSE(amounts_valid(make_signed(TokenTransfer{4, 9, 0}, 4, 1)));
  EXPECT_FALSE(amounts_valid(make_signed(HorizontalTrade{0, 1, {std::nan("")}}, 4, 1)));
  EXPECT_TRUE(amounts_valid(make_signed(HorizontalTrade{0, 1, {-2.0}}, 4, 1)));
}

TEST(Leader, RotatesWithHeight) {
  EXPECT_EQ(leader_for(0, kFour), 0u);
  EXPECT_EQ(leader_for(5, kFour), 1u);
  for (std::uint64_t h = 0; h < 12; ++h) EXPECT_EQ(leader_for(h + 1, kFour), (leader_for(h, kFour) + 1) % 4);
  EXPECT_EQ(leader_for(5, kFour, 2), 3u);
  EXPECT_THROW(leader_for(0, std::vector<NodeId>{}), std::invalid_argument);
}

TEST(Quorum, Arithmetic) {
  EXPECT_EQ(fault_tolerance(4), 1u);
  EXPECT_EQ(quorum_size(4), 3u);
  EXPECT_EQ(fault_tolerance(7), 2u);
  EXPECT_EQ(quorum_size(7), 5u);
  EXPECT_EQ(quorum_size(13), 9u);
}

TEST(Aggregate, ThreeDistinctVotesFormAProof) {
  const Digest d = sha256(Bytes{1, 2, 3});
  std::vector<Vote> votes;
  for (NodeId v : {2u, 0u, 3u}) votes.push_back(make_vote(VotePhase::Prepare, 4, 1, d, v));
  const ConsensusProof p = aggregate_votes(votes, 3, VotePhase::Prepare, 4, 1);
  EXPECT_EQ(p.votes.size(), 3u);
  EXPECT_EQ(p.quorum, 3u);
  EXPECT_TRUE(verify_proof(p, kFour));
}

TEST(Aggregate, DuplicateSenderCountsOnce) {
  const Digest d = sha256(Bytes{1});
  std::vector<Vote> votes{make_vote(VotePhase::Commit, 0, 0, d, 1), make_vote(VotePhase::Commit, 0, 0, d, 1),
                          make_vote(VotePhase::Commit, 0, 0, d, 2)};
  EXPECT_THROW(aggregate_votes(votes, 3, VotePhase::Commit, 0, 0), AggregationError);
}

TEST(Aggregate, MixedDigestsAreRejected) {
  std::vector<Vote> votes{make_vote(VotePhase::Commit, 0, 0, sha256(Bytes{1}), 0),
                          make_vote(VotePhase::Commit, 0, 0, sha256(Bytes{2}), 1),
                          make_vote(VotePhase::Commit, 0, 0, sha256(Bytes{1}), 2)};
  EXPECT_THROW(aggregate_votes(votes, 3, VotePhase::Commit, 0, 0), AggregationError);
}

TEST(Proof, ForgedOrForeignVotesFail) {
  const Digest d = sha256(Bytes{7});
  std::vector<Vote> votes;
  for (NodeId v : {0u, 1u, 2u}) votes.push_back(make_vote(VotePhase::Commit, 0, 0, d, v));
  ConsensusProof p = aggregate_votes(votes, 3, VotePhase::Commit, 0, 0);
  ConsensusProof forged = p;
  forged.votes[1].second[0] ^= 1;
  EXPECT_FALSE(verify_proof(forged, kFour));
  EXPECT_FALSE(verify_proof(p, std::vector<NodeId>{0, 1, 5, 6}));
  ConsensusProof moved = p;
  moved.height = 1;
  EXPECT_FALSE(verify_proof(moved, kFour));
}

TEST(Block, HonestBlockVerifies) {
  const Block genesis = honest_block(0, nullptr, sample_txs());
  EXPECT_EQ(verify_block(genesis, nullptr, kFour), BlockCheck::Ok);
  const Block next = honest_block(1, &genesis.header, {});
  EXPECT_EQ(verify_block(next, &genesis.header, kFour), BlockCheck::Ok);
  EXPECT_EQ(decode_block(encode_block(next)).digest(), next.digest());
}

TEST(Block, MutatedTransactionBreaksTheRoot) {
  Block b = honest_block(0, nullptr, sample_txs());
  std::get<TokenTransfer>(b.txs[0].payload).amount += 1;
  sign(b.txs[0]);
  EXPECT_EQ(verify_block(b, nullptr, kFour), BlockCheck::TxRootMismatch);
}

TEST(Block, WrongProposerIsRejected) {
  Block b = honest_block(0, nullptr, {});
  b.header.proposer = 2;
  EXPECT_EQ(verify_block(b, nullptr, kFour), BlockCheck::WrongProposer);
}

TEST(Block, ParentAndHeightAreChecked) {
  const Block genesis = honest_block(0, nullptr, {});
  Block orphan = honest_block(1, &genesis.header, {});
  orphan.header.parent[0] ^= 1;
  EXPECT_EQ(verify_block(orphan, &genesis.header, kFour), BlockCheck::ParentMismatch);
  const Block skipped = honest_block(2, &genesis.header, {});
  EXPECT_EQ(verify_block(skipped, &genesis.header, kFour), BlockCheck::HeightMismatch);
}

TEST(Block, ProofMustCoverThisBlock) {
  Block b = honest_block(0, nullptr, {});
  const Block other = honest_block(0, nullptr, sample_txs());
  b.proof = other.proof;
  EXPECT_EQ(verify_block(b, nullptr, kFour), BlockCheck::ProofMismatch);
}

TEST(Merkle, RootDependsOnOrder) {
  const auto txs = sample_txs();
  std::vector<Transaction> swapped = txs;
  std::swap(swapped[0], swapped[1]);
  EXPECT_NE(tx_root(txs), tx_root(swapped));
  EXPECT_EQ(tx_root(txs), tx_root(sample_txs()));
}

TEST(Message, EveryTypeRoundTrips) {
  const Block b = honest_block(0, nullptr, sample_txs());
  ViewChangeVote vc{2, 1, default_signer().sign(2, view_change_message(0, 1)), b.proof};
  std::vector<Message> msgs;
  Message m;
  m.type = MsgType::ClientTx, m.from = 4, m.to = 1, m.txs = sample_txs();
  msgs.push_back(m);
  m = {};
  m.type = MsgType::PrePrepare, m.from = 0, m.to = 3, m.block = b, m.view_changes = {vc};
  m.signature = Bytes(32, 9);
  msgs.push_back(m);
  m = {};
  m.type = MsgType::PrepareVote, m.from = 1, m.height = 3, m.view = 2, m.digest = b.digest(), m.signature = Bytes(32, 1);
  msgs.push_back(m);
  m = {};
  m.type = MsgType::AggregatedCommit, m.from = 0, m.to = 2, m.proof = b.proof;
  msgs.push_back(m);
  m = {};
  m.type = MsgType::ViewChange, m.from = 2, m.view_change = vc, m.block = b;
  msgs.push_back(m);
  m = {};
  m.type = MsgType::SyncResponse, m.from = 1, m.to = 7, m.blocks = {b, b};
  msgs.push_back(m);
  m = {};
  m.type = MsgType::BlockAnnounce, m.from = 1, m.to = 7, m.blocks = {b};
  msgs.push_back(m);
  m = {};
  m.type = MsgType::SyncRequest, m.from = 3, m.to = 1, m.height = 12;
  msgs.push_back(m);
  for (const auto& msg : msgs) EXPECT_EQ(decode_message(encode_message(msg)), msg) << to_string(msg.type);
}

TEST(Contract, HorizontalTradesThenSctMatchesOffChainStep) {
  TwoUserContract c;
  std::vector<Transaction> txs{make_signed(HorizontalTrade{0, 1, {1.5, -0.5}}, 10, 1),
                               make_signed(HorizontalTrade{1, 1, {-1.0, 0.75}}, 11, 1),
                               make_signed(SctCompute{1}, 2, 1)};
  const ContractState after = execute_transactions(c.cs, txs, c.cfg, default_signer());
  EXPECT_EQ(after.applied, 3u);
  ASSERT_EQ(after.history.size(), 1u);

  tem::DualState expected = tem::DualState::zeros(2, 2, 1.0);
  expected.e.set_slice(0, std::vector<double>{1.5, -0.5});
  expected.e.set_slice(1, std::vector<double>{-1.0, 0.75});
  expected = tem::sct_step(expected);
  expected.k += 1;
  expected.rho = c.cfg.admm.rho.at(expected.k);
  EXPECT_EQ(reveal(after), expected);
  EXPECT_EQ(after.history[0].digest, tem::dual_digest(expected));
}

TEST(Contract, SctWaitsForEveryUser) {
  TwoUserContract c;
  std::vector<Transaction> txs{make_signed(HorizontalTrade{0, 1, {1.5, -0.5}}, 10, 1), make_signed(SctCompute{1}, 2, 1)};
  const ContractState after = execute_transactions(c.cs, txs, c.cfg, default_signer());
  EXPECT_EQ(after.rejected[int(TxReject::Incomplete)], 1u);
  EXPECT_TRUE(after.history.empty());
}

TEST(Contract, OverdraftIsRejected) {
  TwoUserContract c;
  const ContractState after =
      execute_transactions(c.cs, std::vector{make_signed(TokenTransfer{10, 11, 1'001}, 10, 1)}, c.cfg, default_signer());
  EXPECT_EQ(after.balances, c.cs.balances);
  EXPECT_EQ(after.rejected[int(TxReject::InsufficientBalance)], 1u);
}

TEST(Contract, TransferMovesTokens) {
  TwoUserContract c;
  const ContractState after =
      execute_transactions(c.cs, std::vector{make_signed(TokenTransfer{10, 11, 400}, 10, 1)}, c.cfg, default_signer());
  EXPECT_EQ(after.balances.at(10), 600);
  EXPECT_EQ(after.balances.at(11), 1'400);
  EXPECT_EQ(after.total_balance(), c.cs.total_balance());
}

TEST(Contract, ReplayedOldIterationIsRejected) {
  TwoUserContract c;
  std::vector<Transaction> round1{make_signed(HorizontalTrade{0, 1, {1.5, -0.5}}, 10, 1),
                                  make_signed(HorizontalTrade{1, 1, {-1.0, 0.75}}, 11, 1),
                                  make_signed(SctCompute{1}, 2, 1)};
  const ContractState mid = execute_transactions(c.cs, round1, c.cfg, default_signer());
  const ContractState after =
      execute_transactions(mid, std::vector{make_signed(HorizontalTrade{0, 1, {9.0, 9.0}}, 10, 2)}, c.cfg, default_signer());
  EXPECT_EQ(after.rejected[int(TxReject::StaleIteration)], 1u);
  EXPECT_EQ(after.dual, mid.dual);
  EXPECT_EQ(after.submitted, mid.submitted);
  EXPECT_EQ(after.last_nonce, mid.last_nonce);
}

TEST(Contract, ReplayedNonceIsRejected) {
  TwoUserContract c;
  const Transaction tx = make_signed(TokenTransfer{10, 11, 1}, 10, 1);
  const ContractState after = execute_transactions(c.cs, std::vector{tx, tx}, c.cfg, default_signer());
  EXPECT_EQ(after.applied, 1u);
  EXPECT_EQ(after.rejected[int(TxReject::StaleNonce)], 1u);
}

TEST(Contract, ForeignSenderAndBadSignature) {
  TwoUserContract c;
  Transaction spoof = make_signed(HorizontalTrade{0, 1, {0.0, 0.0}}, 11, 1);
  Transaction tampered = make_signed(TokenTransfer{10, 11, 3}, 10, 1);
  std::get<TokenTransfer>(tampered.payload).amount = 300;
  const ContractState after = execute_transactions(c.cs, std::vector{spoof, tampered}, c.cfg, default_signer());
  EXPECT_EQ(after.rejected[int(TxReject::UnknownSender)], 1u);
  EXPECT_EQ(after.rejected[int(TxReject::BadSignature)], 1u);
  EXPECT_EQ(after.applied, 0u);
}

TEST(Contract, VerticalRewardPaidByUtility) {
  TwoUserContract c;
  const VerticalTrade v{1, {2.0, 3.0}, {5.0, 1.0}};
  // 0.1 * (2 + 3) feed-in, plus 0.3 * 1 demand response inside the window
  EXPECT_EQ(vertical_reward(v, c.cfg), 800'000);
  const ContractState after = execute_transactions(c.cs, std::vector{make_signed(v, 11, 1)}, c.cfg, default_signer());
  EXPECT_EQ(after.balances.at(11), 1'000 + 800'000);
  EXPECT_EQ(after.balances.at(kUtilityAccount), c.cfg.initial_utility_balance - 800'000);
  EXPECT_EQ(after.feed_in[1], v.feed_in);
}

TEST(Contract, ClosesAtIterationLimit) {
  TwoUserContract c;
  c.cfg.admm.max_iter = 1;
  c.cs = ContractState::initial(c.cfg);
  std::vector<Transaction> txs{make_signed(HorizontalTrade{0, 1, {1.5, -0.5}}, 10, 1),
                               make_signed(HorizontalTrade{1, 1, {-1.0, 0.75}}, 11, 1),
                               make_signed(SctCompute{1}, 2, 1), make_signed(HorizontalTrade{0, 2, {0, 0}}, 10, 2)};
  const ContractState after = execute_transactions(c.cs, txs, c.cfg, default_signer());
  EXPECT_TRUE(after.closed);
  EXPECT_FALSE(after.converged);
  EXPECT_EQ(after.rejected[int(TxReject::Closed)], 1u);
}

TEST(Contract, StateDigestIsDeterministic) {
  TwoUserContract a, b;
  EXPECT_EQ(state_digest(a.cs), state_digest(b.cs));
  b.cs = execute_transactions(b.cs, std::vector{make_signed(TokenTransfer{10, 11, 1}, 10, 1)}, b.cfg, default_signer());
  EXPECT_NE(state_digest(a.cs), state_digest(b.cs));
}

TEST(Consensus, ModifiedModeUsesFiveBroadcastRoundsPerBlock) {
  for (int n : {4, 7}) {
    Loop loop(ProtocolMode::Modified, n);
    loop.run_to_height(3);
    for (std::uint64_t h = 0; h < 3; ++h) {
      EXPECT_EQ(loop.consensus_sends(h), 5 * (n - 1)) << "n=" << n << " height " << h;
      EXPECT_EQ(loop.sends[MsgType::PrePrepare][h], n - 1);
      EXPECT_EQ(loop.sends[MsgType::AggregatedCommit][h], n - 1);
    }
  }
}

TEST(Consensus, ClassicModeIsAllToAll) {
  Loop loop(ProtocolMode::Classic, 4);
  loop.run_to_height(2);
  EXPECT_EQ(loop.consensus_sends(0), 2 * 4 * 3);
  EXPECT_EQ(loop.sends[MsgType::CommitVote][0], 4 * 3);
}

TEST(Consensus, LedgersAgree) {
  Loop loop(ProtocolMode::Modified, 4);
  loop.run_to_height(4);
  const auto& ref = loop.nodes[0].ledger;
  for (auto& [id, s] : loop.nodes) {
    ASSERT_GE(s.ledger.size(), 4u);
    for (std::size_t h = 0; h < 4; ++h) {
      EXPECT_EQ(s.ledger[h].digest(), ref[h].digest());
      EXPECT_EQ(verify_block(s.ledger[h], h ? &s.ledger[h - 1].header : nullptr, loop.cfg.validators), BlockCheck::Ok);
      EXPECT_EQ(s.ledger[h].header.proposer, leader_for(h, loop.cfg.validators));
    }
    EXPECT_EQ(s.invalid_messages, 0u);
  }
}

TEST(Consensus, ProposalFromNonLeaderIsIgnored) {
  ConsensusConfig cfg;
  cfg.validators = kFour;
  NodeState follower = make_node(1, Role::Validator, cfg);
  start(follower, 0, cfg);
  Block b;
  b.header.proposer = 2;
  b.header.tx_root = tx_root(b.txs);
  Message m;
  m.type = MsgType::PrePrepare;
  m.from = 2;
  m.to = 1;
  m.block = b;
  m.signature = default_signer().sign(2, vote_message(VotePhase::Prepare, 0, 0, b.digest()));
  const auto [after, out] = handle_message(follower, m, 10, cfg);
  EXPECT_EQ(after.invalid_messages, 1u);
  EXPECT_EQ(after.phase, Phase::Idle);
  for (const auto& o : out) EXPECT_NE(o.msg.type, MsgType::PrepareVote);
}

TEST(Consensus, FollowerVotesOnlyToTheLeader) {
  ConsensusConfig cfg;
  cfg.validators = kFour;
  NodeState follower = make_node(1, Role::Validator, cfg);
  start(follower, 0, cfg);
  Block b;
  b.header.proposer = 0;
  b.header.tx_root = tx_root(b.txs);
  Message m;
  m.type = MsgType::PrePrepare;
  m.from = 0;
  m.to = 1;
  m.block = b;
  m.signature = default_signer().sign(0, vote_message(VotePhase::Prepare, 0, 0, b.digest()));
  const auto [after, out] = handle_message(follower, m, 10, cfg);
  EXPECT_EQ(after.phase, Phase::PrePrepared);
  int votes = 0;
  for (const auto& o : out)
    if (o.msg.type == MsgType::PrepareVote) {
      ++votes;
      EXPECT_EQ(o.msg.to, 0u);
    }
  EXPECT_EQ(votes, 1);
}
