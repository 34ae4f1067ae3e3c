#include <utility>

#include "graphseq/codec.h"
#include "graphseq/errors.h"
#include "graphseq/vocab.h"

namespace graphseq {

void PartialGraphState::fail(ParseFailure kind, std::string message) {
  state_ = ParserState::kMalformed;
  failure_ = kind;
  message_ = std::move(message) + " at token " + std::to_string(position_);
}

bool PartialGraphState::close_label(std::string& out) {
  if (buffer_.empty()) {
    fail(ParseFailure::kEmptyLabel, "empty label");
    return false;
  }
  // label := 1+ byte tokens, optionally followed by <D> and 1+ digits.
  std::size_t base_end = buffer_.size();
  for (std::size_t i = 0; i < buffer_.size(); ++i) {
    if (buffer_[i] == tok::kD) {
      base_end = i;
      break;
    }
  }
  if (base_end == 0) {
    fail(ParseFailure::kEmptyLabel, "label has no text before <D>");
    return false;
  }
  if (base_end < buffer_.size()) {
    if (base_end + 1 == buffer_.size()) {
      fail(ParseFailure::kSyntax, "<D> not followed by digits");
      return false;
    }
    for (std::size_t i = base_end + 1; i < buffer_.size(); ++i) {
      if (!is_digit_token(buffer_[i])) {
        fail(ParseFailure::kSyntax, "non-digit after <D>");
        return false;
      }
    }
  }
  out = decode(buffer_);
  buffer_.clear();
  return true;
}

int PartialGraphState::node_id(const std::string& label) {
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] == label) return static_cast<int>(i);
  }
  labels_.push_back(label);
  occurrence_count_.push_back(0);
  return static_cast<int>(labels_.size()) - 1;
}

void PartialGraphState::add_occurrence(int node, bool is_pred,
                                       int last_token) {
  occurrences_.push_back(ParsedOccurrence{
      node, occurrence_count_[node]++, static_cast<int>(edges_.size()),
      is_pred, last_token, position_});
}

void PartialGraphState::complete_edge(int completed_at) {
  std::string succ_label;
  if (!close_label(succ_label)) return;
  const int succ = node_id(succ_label);
  if (!seen_.emplace(pred_node_, succ, edge_label_).second) {
    fail(ParseFailure::kDuplicateEdge,
         "duplicate edge " + pred_label_ + " -" + edge_label_ + "-> " +
             succ_label);
    return;
  }
  const int last = completed_at - 1;
  add_occurrence(succ, false, last);
  edges_.push_back(
      ParsedEdge{pred_node_, succ, edge_label_, last, completed_at});
}

void PartialGraphState::push(int token) {
  if (state_ == ParserState::kMalformed) {
    ++position_;
    return;
  }
  const bool special = is_special(token);
  if (!special && !is_byte_token(token)) {
    fail(ParseFailure::kSyntax, "unknown token id");
    ++position_;
    return;
  }
  switch (state_) {
    case ParserState::kExpectPN:
      if (token == tok::kPN) {
        state_ = ParserState::kPredLabel;
      } else {
        fail(ParseFailure::kSyntax, "expected <PN>");
      }
      break;
    case ParserState::kPredLabel:
      if (token == tok::kE) {
        if (!close_label(pred_label_)) break;
        pred_node_ = node_id(pred_label_);
        pred_last_token_ = position_ - 1;
        add_occurrence(pred_node_, true, pred_last_token_);
        state_ = ParserState::kEdgeLabel;
      } else if (special && token != tok::kD) {
        fail(ParseFailure::kSyntax, "unexpected " + token_text(token) +
                                        " in predecessor label");
      } else {
        buffer_.push_back(token);
      }
      break;
    case ParserState::kEdgeLabel:
      if (token == tok::kSN) {
        if (!close_label(edge_label_)) break;
        state_ = ParserState::kSuccLabel;
      } else if (special && token != tok::kD) {
        fail(ParseFailure::kSyntax,
             "unexpected " + token_text(token) + " in edge label");
      } else {
        buffer_.push_back(token);
      }
      break;
    case ParserState::kSuccLabel:
      if (token == tok::kPN || token == tok::kEOS) {
        complete_edge(position_);
        if (state_ == ParserState::kMalformed) break;
        state_ = token == tok::kPN ? ParserState::kPredLabel
                                   : ParserState::kDone;
      } else if (special && token != tok::kD) {
        fail(ParseFailure::kSyntax, "unexpected " + token_text(token) +
                                        " in successor label");
      } else {
        buffer_.push_back(token);
      }
      break;
    case ParserState::kDone:
      fail(ParseFailure::kSyntax, "token after end of graph");
      break;
    case ParserState::kMalformed:
      break;
  }
  ++position_;
}

void PartialGraphState::finish() {
  switch (state_) {
    case ParserState::kSuccLabel:
      complete_edge(position_);
      if (state_ != ParserState::kMalformed) state_ = ParserState::kDone;
      break;
    case ParserState::kDone:
    case ParserState::kMalformed:
      break;
    default:
      fail(ParseFailure::kSyntax, "truncated serialization");
      break;
  }
}

TextGraph PartialGraphState::graph() const {
  switch (failure_) {
    case ParseFailure::kSyntax:
      throw SyntaxError(message_);
    case ParseFailure::kDuplicateEdge:
      throw DuplicateEdgeError(message_);
    case ParseFailure::kEmptyLabel:
      throw EmptyLabelError(message_);
    case ParseFailure::kNone:
      break;
  }
  if (state_ != ParserState::kDone) {
    throw SyntaxError("serialization is not terminated");
  }
  if (edges_.empty()) throw SyntaxError("serialization has no edges");
  std::vector<Edge> edges;
  edges.reserve(edges_.size());
  for (const ParsedEdge& e : edges_) edges.push_back({e.pred, e.succ, e.label});
  return TextGraph(labels_, std::move(edges));
}

PartialGraphState incremental_parse(std::span<const int> tokens) {
  PartialGraphState state;
  for (int t : tokens) state.push(t);
  return state;
}

}  // namespace graphseq
