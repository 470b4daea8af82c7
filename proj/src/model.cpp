#include "rtpen/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "rtpen/errors.hpp"

namespace rtpen {

int ParamStore::add(const std::string& name, Mat init) {
  if (find(name) >= 0) throw ConfigError("duplicate parameter " + name);
  Entry e;
  e.name = name;
  e.adam_m = Mat::Zero(init.rows(), init.cols());
  e.adam_v = Mat::Zero(init.rows(), init.cols());
  e.value = std::move(init);
  entries_.push_back(std::move(e));
  return static_cast<int>(entries_.size()) - 1;
}

int ParamStore::find(const std::string& name) const {
  for (size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].name == name) return static_cast<int>(i);
  return -1;
}

void ParamStore::adam_update(const std::vector<Mat>& grads,
                             double learning_rate, double weight_decay) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  ++adam_step;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(adam_step));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(adam_step));
  for (size_t i = 0; i < entries_.size(); ++i) {
    if (i >= grads.size() || grads[i].size() == 0) continue;
    Entry& e = entries_[i];
    Mat grad = grads[i] + weight_decay * e.value;
    e.adam_m = kBeta1 * e.adam_m + (1.0 - kBeta1) * grad;
    e.adam_v = kBeta2 * e.adam_v.array().matrix() +
               (1.0 - kBeta2) * grad.cwiseProduct(grad);
    e.value.array() -= learning_rate * (e.adam_m.array() / bc1) /
                       ((e.adam_v.array() / bc2).sqrt() + kEps);
  }
}

namespace {

Mat uniform_init(Rng& rng, int rows, int cols, int fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = rng.uniform(-bound, bound);
  return m;
}

GruDirectionIds add_gru_direction(ParamStore& store, const std::string& prefix,
                                  Rng& rng, int input_dim, int hidden) {
  GruDirectionIds ids{};
  auto w = [&](const std::string& gate) {
    return store.add(prefix + ".w_" + gate,
                     uniform_init(rng, hidden, input_dim, input_dim));
  };
  auto u = [&](const std::string& gate) {
    return store.add(prefix + ".u_" + gate,
                     uniform_init(rng, hidden, hidden, hidden));
  };
  auto b = [&](const std::string& gate) {
    return store.add(prefix + ".b_" + gate,
                     uniform_init(rng, 1, hidden, input_dim));
  };
  ids.w_update = w("update");
  ids.u_update = u("update");
  ids.b_update = b("update");
  ids.w_reset = w("reset");
  ids.u_reset = u("reset");
  ids.b_reset = b("reset");
  ids.w_cand = w("cand");
  ids.u_cand = u("cand");
  ids.b_cand = b("cand");
  return ids;
}

BranchParamIds add_branch(ParamStore& store, const std::string& prefix,
                          Rng& rng, const ModelDims& d) {
  BranchParamIds ids{};
  ids.attn_w1 =
      store.add(prefix + ".attn_w1", uniform_init(rng, d.d_h, d.d_v, d.d_v));
  ids.attn_w2 =
      store.add(prefix + ".attn_w2", uniform_init(rng, d.d_h, d.d_q, d.d_q));
  ids.attn_b = store.add(prefix + ".attn_b", uniform_init(rng, 1, d.d_h, d.d_h));
  ids.attn_v =
      store.add(prefix + ".attn_v", uniform_init(rng, d.d_h, 1, d.d_h));
  const int gru_in = d.d_v + d.d_q;
  ids.gru_fwd = add_gru_direction(store, prefix + ".gru_fwd", rng, gru_in,
                                  d.gru_hidden);
  ids.gru_bwd = add_gru_direction(store, prefix + ".gru_bwd", rng, gru_in,
                                  d.gru_hidden);
  const int k2 = d.conv_kernel * d.conv_kernel;
  ids.conv1_kernel = store.add(
      prefix + ".conv1_kernel",
      uniform_init(rng, d.conv_channels, d.d_m() * k2, d.d_m() * k2));
  ids.conv1_bias =
      store.add(prefix + ".conv1_bias",
                uniform_init(rng, 1, d.conv_channels, d.d_m() * k2));
  ids.conv2_kernel =
      store.add(prefix + ".conv2_kernel",
                uniform_init(rng, d.conv_channels, d.conv_channels * k2,
                             d.conv_channels * k2));
  ids.conv2_bias =
      store.add(prefix + ".conv2_bias",
                uniform_init(rng, 1, d.conv_channels, d.conv_channels * k2));
  ids.score_w =
      store.add(prefix + ".score_w",
                uniform_init(rng, d.conv_channels, 1, d.conv_channels));
  ids.score_b = store.add(prefix + ".score_b",
                          uniform_init(rng, 1, 1, d.conv_channels));
  return ids;
}

}  // namespace

Model build_model(const ModelDims& dims, uint64_t seed,
                  bool share_branch_params) {
  if (dims.d_v < 1 || dims.d_q < 1 || dims.d_h < 1 || dims.n_c < 1 ||
      dims.gru_hidden < 1 || dims.conv_channels < 1)
    throw ConfigError("model dimensions must be positive");
  if (dims.conv_kernel < 1 || dims.conv_kernel % 2 == 0)
    throw ConfigError("conv kernel must be a positive odd integer");

  Model m;
  m.dims = dims;
  Rng rng(seed);

  m.filter.centers = m.store.add(
      "filter.centers", uniform_init(rng, dims.n_c, dims.d_q, dims.d_q));
  m.filter.assign_w = m.store.add(
      "filter.assign_w", uniform_init(rng, dims.n_c, dims.d_q, dims.d_q));
  m.filter.assign_b = m.store.add("filter.assign_b",
                                  uniform_init(rng, 1, dims.n_c, dims.d_q));
  m.filter.score_w1 = m.store.add(
      "filter.score_w1", uniform_init(rng, dims.d_h, dims.d_v, dims.d_v));
  m.filter.score_w2 = m.store.add(
      "filter.score_w2", uniform_init(rng, dims.d_h, dims.d_q, dims.d_q));
  m.filter.score_b =
      m.store.add("filter.score_b", uniform_init(rng, 1, dims.d_h, dims.d_h));
  m.filter.score_v =
      m.store.add("filter.score_v", uniform_init(rng, dims.d_h, 1, dims.d_h));

  m.branch = add_branch(m.store, "branch", rng, dims);
  if (!share_branch_params) {
    // the unshared ablation starts both branches from identical values
    Model copy_source;
    m.branch_suppressed = add_branch(m.store, "branch_sp", rng, dims);
    auto copy_ids = [&](int dst, int src) {
      m.store.value(dst) = m.store.value(src);
    };
    const BranchParamIds& a = m.branch;
    const BranchParamIds& b = *m.branch_suppressed;
    copy_ids(b.attn_w1, a.attn_w1);
    copy_ids(b.attn_w2, a.attn_w2);
    copy_ids(b.attn_b, a.attn_b);
    copy_ids(b.attn_v, a.attn_v);
    const GruDirectionIds* srcs[2] = {&a.gru_fwd, &a.gru_bwd};
    const GruDirectionIds* dsts[2] = {&b.gru_fwd, &b.gru_bwd};
    for (int i = 0; i < 2; ++i) {
      copy_ids(dsts[i]->w_update, srcs[i]->w_update);
      copy_ids(dsts[i]->u_update, srcs[i]->u_update);
      copy_ids(dsts[i]->b_update, srcs[i]->b_update);
      copy_ids(dsts[i]->w_reset, srcs[i]->w_reset);
      copy_ids(dsts[i]->u_reset, srcs[i]->u_reset);
      copy_ids(dsts[i]->b_reset, srcs[i]->b_reset);
      copy_ids(dsts[i]->w_cand, srcs[i]->w_cand);
      copy_ids(dsts[i]->u_cand, srcs[i]->u_cand);
      copy_ids(dsts[i]->b_cand, srcs[i]->b_cand);
    }
    copy_ids(b.conv1_kernel, a.conv1_kernel);
    copy_ids(b.conv1_bias, a.conv1_bias);
    copy_ids(b.conv2_kernel, a.conv2_kernel);
    copy_ids(b.conv2_bias, a.conv2_bias);
    copy_ids(b.score_w, a.score_w);
    copy_ids(b.score_b, a.score_b);
    (void)copy_source;
  }

  m.erase.recon_w = m.store.add(
      "erase.recon_w", uniform_init(rng, dims.d_q, dims.d_m(), dims.d_m()));
  m.erase.fusion_logit = m.store.add("erase.fusion_logit", Mat::Zero(1, 1));

  Mat unk(1, dims.d_q);
  for (Eigen::Index c = 0; c < dims.d_q; ++c) unk(0, c) = 0.1 * rng.normal();
  m.unknown_token = m.store.add("embed.unknown", std::move(unk));
  return m;
}

namespace {

void write_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& out, uint64_t v) {
  write_u32(out, static_cast<uint32_t>(v & 0xffffffffu));
  write_u32(out, static_cast<uint32_t>(v >> 32));
}

uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw FormatError("truncated checkpoint");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

uint64_t read_u64(std::istream& in) {
  const uint64_t lo = read_u32(in);
  const uint64_t hi = read_u32(in);
  return lo | (hi << 32);
}

void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  const uint32_t len = read_u32(in);
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (!in) throw FormatError("truncated checkpoint string");
  return s;
}

void write_mat(std::ostream& out, const Mat& m) {
  write_u32(out, static_cast<uint32_t>(m.rows()));
  write_u32(out, static_cast<uint32_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      uint64_t bits;
      double v = m(r, c);
      std::memcpy(&bits, &v, 8);
      write_u64(out, bits);
    }
}

Mat read_mat(std::istream& in) {
  const uint32_t rows = read_u32(in);
  const uint32_t cols = read_u32(in);
  Mat m(rows, cols);
  for (uint32_t r = 0; r < rows; ++r)
    for (uint32_t c = 0; c < cols; ++c) {
      const uint64_t bits = read_u64(in);
      double v;
      std::memcpy(&v, &bits, 8);
      m(r, c) = v;
    }
  return m;
}

constexpr uint32_t kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const std::string& config_text, int epoch, uint64_t seed) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write checkpoint " + path.string());
  out.write("RTPC", 4);
  write_u32(out, kCheckpointVersion);
  write_string(out, config_text);
  write_u32(out, static_cast<uint32_t>(epoch));
  write_u64(out, seed);
  const ModelDims& d = model.dims;
  write_u32(out, static_cast<uint32_t>(d.d_v));
  write_u32(out, static_cast<uint32_t>(d.d_q));
  write_u32(out, static_cast<uint32_t>(d.d_h));
  write_u32(out, static_cast<uint32_t>(d.n_c));
  write_u32(out, static_cast<uint32_t>(d.gru_hidden));
  write_u32(out, static_cast<uint32_t>(d.conv_channels));
  write_u32(out, static_cast<uint32_t>(d.conv_kernel));
  write_u32(out, model.branch_suppressed.has_value() ? 0u : 1u);  // shared?
  write_u64(out, static_cast<uint64_t>(model.store.adam_step));
  write_u32(out, static_cast<uint32_t>(model.store.count()));
  for (const auto& e : model.store.entries()) {
    write_string(out, e.name);
    write_mat(out, e.value);
    write_mat(out, e.adam_m);
    write_mat(out, e.adam_v);
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "RTPC", 4) != 0)
    throw FormatError("bad checkpoint magic in " + path.string());
  if (read_u32(in) != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version in " + path.string());
  Checkpoint ck;
  ck.config_text = read_string(in);
  ck.epoch = static_cast<int>(read_u32(in));
  ck.seed = read_u64(in);
  ModelDims d;
  d.d_v = static_cast<int>(read_u32(in));
  d.d_q = static_cast<int>(read_u32(in));
  d.d_h = static_cast<int>(read_u32(in));
  d.n_c = static_cast<int>(read_u32(in));
  d.gru_hidden = static_cast<int>(read_u32(in));
  d.conv_channels = static_cast<int>(read_u32(in));
  d.conv_kernel = static_cast<int>(read_u32(in));
  const bool shared = read_u32(in) == 1u;
  const uint64_t adam_step = read_u64(in);
  ck.model = build_model(d, /*seed=*/1, shared);
  ck.model.store.adam_step = static_cast<int64_t>(adam_step);
  const uint32_t n_params = read_u32(in);
  if (static_cast<int>(n_params) != ck.model.store.count())
    throw FormatError("checkpoint parameter count mismatch in " +
                      path.string());
  for (uint32_t i = 0; i < n_params; ++i) {
    const std::string name = read_string(in);
    const int pid = ck.model.store.find(name);
    if (pid < 0)
      throw FormatError("unknown parameter '" + name + "' in checkpoint");
    auto& e = ck.model.store.entry(pid);
    Mat value = read_mat(in);
    Mat am = read_mat(in);
    Mat av = read_mat(in);
    if (value.rows() != e.value.rows() || value.cols() != e.value.cols())
      throw FormatError("parameter shape mismatch for '" + name + "'");
    e.value = std::move(value);
    e.adam_m = std::move(am);
    e.adam_v = std::move(av);
  }
  return ck;
}

}  // namespace rtpen
