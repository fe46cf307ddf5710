// Copyright 2026 TTRSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "ttr/summarizer.hpp"

#include <cmath>
#include <stdexcept>

#include "ttr/errors.hpp"
#include "ttr/rng.hpp"

namespace ttr {
namespace {

constexpr double kCosineGuard = 1e-12;

ad::Matrix fan_in_uniform(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in,
                          std::uint64_t seed) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Rng rng(seed);
  ad::Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-bound, bound);
  return m;
}

void add_linear(ParamStore& store, const std::string& name, Eigen::Index out_dim,
                Eigen::Index in_dim, std::uint64_t seed) {
  store.add(name + ".w", fan_in_uniform(out_dim, in_dim, in_dim, derive_seed(seed, name + ".w")));
  store.add(name + ".b", fan_in_uniform(out_dim, 1, in_dim, derive_seed(seed, name + ".b")));
}

void add_stack(ParamStore& store, const std::string& prefix, const SummarizerHyperparams& hp,
               int layers, int d_in, int d_out, bool input_proj, std::uint64_t seed) {
  if (input_proj) add_linear(store, prefix + ".inproj", hp.d_model, d_in, seed);
  for (int l = 0; l < layers; ++l) {
    const std::string lp = prefix + ".l" + std::to_string(l);
    store.add(lp + ".ln1.g", ad::Matrix::Ones(hp.d_model, 1));
    store.add(lp + ".ln1.b", ad::Matrix::Zero(hp.d_model, 1));
    add_linear(store, lp + ".attn.q", hp.d_model, hp.d_model, seed);
    add_linear(store, lp + ".attn.k", hp.d_model, hp.d_model, seed);
    add_linear(store, lp + ".attn.v", hp.d_model, hp.d_model, seed);
    add_linear(store, lp + ".attn.o", hp.d_model, hp.d_model, seed);
    store.add(lp + ".ln2.g", ad::Matrix::Ones(hp.d_model, 1));
    store.add(lp + ".ln2.b", ad::Matrix::Zero(hp.d_model, 1));
    add_linear(store, lp + ".ffn.1", hp.d_ff, hp.d_model, seed);
    add_linear(store, lp + ".ffn.2", hp.d_model, hp.d_ff, seed);
  }
  add_linear(store, prefix + ".outproj", d_out, hp.d_model, seed);
}

ad::Var linear(ad::Tape& t, const BoundParams& p, const std::string& name, ad::Var x) {
  return t.broadcast_add_col(t.matmul(p[name + ".w"], x), p[name + ".b"]);
}

int stack_layers(const std::string& prefix, const SummarizerHyperparams& hp) {
  return prefix == "sum" ? hp.layers_sum : hp.layers_agg;
}

}  // namespace

void validate(const SummarizerHyperparams& hp, int d_text) {
  if (hp.d_model < 1 || hp.d_ff < 1 || hp.n_heads < 1)
    throw ConfigError("summarizer: dims must be >= 1");
  if (hp.d_model % hp.n_heads != 0)
    throw ConfigError("summarizer: d_model must be divisible by n_heads");
  if (hp.layers_sum < 1 || hp.layers_agg < 1)
    throw ConfigError("summarizer: layer counts must be >= 1");
  // The aggregator consumes d_text-dimensional columns directly; only the
  // subword stack has an input projection.
  if (hp.d_model != d_text)
    throw ConfigError("summarizer: d_model must equal the text embedding dim (aggregator input)");
}

BoundParams::BoundParams(ad::Tape& tape, ParamStore& store) : tape_(&tape), store_(&store) {
  vars_.reserve(store.size());
  for (std::size_t i = 0; i < store.entries().size(); ++i) {
    vars_.push_back(tape.leaf(store.entries()[i].value));
    index_[store.entries()[i].name] = i;
  }
}

ad::Var BoundParams::operator[](const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::logic_error("BoundParams: unknown name " + name);
  return vars_[it->second];
}

void BoundParams::flush_grads() {
  for (std::size_t i = 0; i < vars_.size(); ++i)
    store_->entries()[i].grad += tape_->grad(vars_[i]);
}

void init_summarizer_params(ParamStore& store, const SummarizerHyperparams& hp, int d_audio,
                            int d_text, std::uint64_t seed) {
  validate(hp, d_text);
  add_stack(store, "sum", hp, hp.layers_sum, d_audio, d_text, /*input_proj=*/true, seed);
  add_stack(store, "agg", hp, hp.layers_agg, d_text, d_text, /*input_proj=*/false, seed);
}

ad::Var transformer_forward(ad::Tape& t, const BoundParams& p, const std::string& prefix,
                            const SummarizerHyperparams& hp, ad::Var input) {
  ad::Var x = input;
  if (prefix == "sum") x = linear(t, p, prefix + ".inproj", x);
  if (t.val(x).rows() != hp.d_model)
    throw std::invalid_argument("transformer_forward: input dim mismatch");

  const int d_head = hp.d_model / hp.n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_head));
  const int layers = stack_layers(prefix, hp);

  for (int l = 0; l < layers; ++l) {
    const std::string lp = prefix + ".l" + std::to_string(l);
    // x <- x + SelfAttn(LN(x))
    ad::Var xn = t.layer_norm_cols(x, p[lp + ".ln1.g"], p[lp + ".ln1.b"]);
    ad::Var q = linear(t, p, lp + ".attn.q", xn);
    ad::Var k = linear(t, p, lp + ".attn.k", xn);
    ad::Var v = linear(t, p, lp + ".attn.v", xn);
    std::vector<ad::Var> heads;
    heads.reserve(static_cast<std::size_t>(hp.n_heads));
    for (int h = 0; h < hp.n_heads; ++h) {
      ad::Var qh = t.rows(q, h * d_head, d_head);
      ad::Var kh = t.rows(k, h * d_head, d_head);
      ad::Var vh = t.rows(v, h * d_head, d_head);
      ad::Var scores = t.scale(t.matmul(t.transpose(kh), qh), scale);
      ad::Var attn = t.softmax_cols(scores);
      heads.push_back(t.matmul(vh, attn));
    }
    ad::Var merged = hp.n_heads == 1 ? heads[0] : t.concat_rows(heads);
    x = t.add(x, linear(t, p, lp + ".attn.o", merged));
    // x <- x + FFN(LN(x))
    ad::Var xn2 = t.layer_norm_cols(x, p[lp + ".ln2.g"], p[lp + ".ln2.b"]);
    ad::Var ff = linear(t, p, lp + ".ffn.2", t.gelu(linear(t, p, lp + ".ffn.1", xn2)));
    x = t.add(x, ff);
  }
  return linear(t, p, prefix + ".outproj", x);
}

ad::Var summarize(ad::Tape& t, const BoundParams& p, const SummarizerHyperparams& hp, ad::Var s,
                  const AlignmentMap& align) {
  if (align.total_frames != t.val(s).cols())
    throw std::invalid_argument("summarize: alignment frame count mismatch");
  std::vector<ad::Var> columns;
  columns.reserve(align.segments.size());
  for (const auto& seg : align.segments) {
    if (seg.size() < 1) throw std::invalid_argument("summarize: empty segment");
    ad::Var chunk = t.cols(s, seg.frame_start, seg.size());
    ad::Var y = transformer_forward(t, p, "sum", hp, chunk);
    columns.push_back(t.mean_cols(y));
  }
  return columns.size() == 1 ? columns[0] : t.concat_cols(columns);
}

ad::Var aggregate(ad::Tape& t, const BoundParams& p, const SummarizerHyperparams& hp,
                  ad::Var s_prime) {
  return transformer_forward(t, p, "agg", hp, s_prime);
}

ad::Var ttr_loss_t(ad::Tape& t, ad::Var s_bar, ad::Var w) {
  const ad::Matrix& sv = t.val(s_bar);
  const ad::Matrix& wv = t.val(w);
  if (sv.rows() != wv.rows() || sv.cols() != wv.cols())
    throw std::invalid_argument("ttr_loss: dim/count mismatch");
  const int m = static_cast<int>(sv.cols());
  ad::Var dots = t.col_sums(t.mul(s_bar, w));
  ad::Var ns = t.sqrt_(t.col_sums(t.mul(s_bar, s_bar)));
  ad::Var nw = t.sqrt_(t.col_sums(t.mul(w, w)));
  ad::Var denom = t.add_scalar(t.mul(ns, nw), kCosineGuard);
  ad::Var cos = t.cdiv(dots, denom);
  return t.add_scalar(t.scale(t.sum_all(cos), -1.0 / static_cast<double>(m)), 1.0);
}

double ttr_loss(const ad::Matrix& s_bar, const ad::Matrix& w) {
  ad::Tape t;
  return t.val(ttr_loss_t(t, t.constant(s_bar), t.constant(w)))(0, 0);
}

ad::Var summarizer_apply(ad::Tape& t, const BoundParams& p, const SummarizerHyperparams& hp,
                         ad::Var audio, const AlignmentMap& align) {
  return aggregate(t, p, hp, summarize(t, p, hp, audio, align));
}

ad::Matrix summarizer_eval(ParamStore& store, const SummarizerHyperparams& hp,
                           const ad::Matrix& audio, const AlignmentMap& align) {
  ad::Tape t;
  BoundParams p(t, store);
  ad::Var out = summarizer_apply(t, p, hp, t.constant(audio), align);
  return t.val(out);
}

SummarizerItem make_summarizer_item(const Waveform& wave, const TimedTranscript& transcript,
                                    const Encoders& encoders, const Lexicon& lexicon) {
  SummarizerItem item;
  const EmbeddingMatrix s = encoders.audio_encode(wave);
  const SubwordSequence tokens = tokenize_transcript(transcript, lexicon);
  item.align = align(transcript, tokens.per_word_counts, s.count(), *s.frame_rate);
  item.audio = s.values;
  item.text = encoders.text_encode(tokens).values;
  return item;
}

TrainHistory pretrain_summarizer(ParamStore& params, const SummarizerHyperparams& hp,
                                 const std::vector<SummarizerItem>& train,
                                 const std::vector<SummarizerItem>& validation,
                                 const OptimizerConfig& opt, std::uint64_t shuffle_seed,
                                 LossLog* log,
                                 std::function<void(int, double, double, double)> on_epoch) {
  if (train.empty()) throw std::invalid_argument("pretrain_summarizer: empty dataset");
  if (validation.empty()) throw std::invalid_argument("pretrain_summarizer: empty validation set");

  TrainLoop loop;
  loop.train_size = train.size();
  loop.validation_size = validation.size();
  loop.on_epoch = std::move(on_epoch);
  loop.train_item = [&](std::size_t i) {
    const SummarizerItem& item = train[i];
    ad::Tape t;
    BoundParams p(t, params);
    ad::Var loss = ttr_loss_t(t, summarizer_apply(t, p, hp, t.constant(item.audio), item.align),
                              t.constant(item.text));
    ad::check_finite(t, loss, "pretrain_summarizer");
    t.backward(loss);
    p.flush_grads();
    return t.val(loss)(0, 0);
  };
  loop.validate_item = [&](std::size_t i) {
    const SummarizerItem& item = validation[i];
    ad::Tape t;
    BoundParams p(t, params);
    ad::Var loss = ttr_loss_t(t, summarizer_apply(t, p, hp, t.constant(item.audio), item.align),
                              t.constant(item.text));
    return t.val(loss)(0, 0);
  };
  return run_training(params, opt, loop, shuffle_seed, log);
}

}  // namespace ttr
