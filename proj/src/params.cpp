#include "protmd/params.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace protmd {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

Eigen::MatrixXd& ParamSet::add(const std::string& name, int rows, int cols) {
  if (has(name)) throw InvalidParameter("duplicate parameter group: " + name);
  if (rows <= 0 || cols <= 0) throw InvalidParameter("parameter group must be non-empty: " + name);
  Group g;
  g.value = Eigen::MatrixXd::Zero(rows, cols);
  g.grad = Eigen::MatrixXd::Zero(rows, cols);
  order_.push_back(name);
  return index_.emplace(name, std::move(g)).first->second.value;
}

Eigen::MatrixXd& ParamSet::add_uniform(const std::string& name, int rows, int cols, RngStream& rng) {
  Eigen::MatrixXd& v = add(name, rows, cols);
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    for (Eigen::Index j = 0; j < v.cols(); ++j) v(i, j) = rng.uniform(-limit, limit);
  return v;
}

Eigen::MatrixXd& ParamSet::value(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidParameter("unknown parameter group: " + name);
  return it->second.value;
}

const Eigen::MatrixXd& ParamSet::value(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidParameter("unknown parameter group: " + name);
  return it->second.value;
}

Eigen::MatrixXd& ParamSet::grad(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidParameter("unknown parameter group: " + name);
  return it->second.grad;
}

const Eigen::MatrixXd& ParamSet::grad(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidParameter("unknown parameter group: " + name);
  return it->second.grad;
}

void ParamSet::zero_grads() {
  for (auto& [name, g] : index_) g.grad.setZero();
}

std::size_t ParamSet::scalar_count() const { return scalar_count(order_); }

std::size_t ParamSet::scalar_count(const std::vector<std::string>& groups) const {
  std::size_t n = 0;
  for (const auto& name : groups) n += static_cast<std::size_t>(value(name).size());
  return n;
}

namespace {

constexpr char kMagic[4] = {'E', 'G', 'M', 'N'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw IoError("checkpoint truncated");
  return v;
}

}  // namespace

void ParamSet::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  out.write(kMagic, 4);
  write_u32(out, kVersion);
  write_u32(out, static_cast<std::uint32_t>(order_.size()));
  for (const auto& name : order_) {
    const Eigen::MatrixXd& v = value(name);
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(out, static_cast<std::uint32_t>(v.rows()));
    write_u32(out, static_cast<std::uint32_t>(v.cols()));
    for (Eigen::Index r = 0; r < v.rows(); ++r)
      for (Eigen::Index c = 0; c < v.cols(); ++c) {
        const double d = v(r, c);
        out.write(reinterpret_cast<const char*>(&d), sizeof(d));
      }
  }
  if (!out) throw IoError("checkpoint write failed: " + path.string());
}

ParamSet ParamSet::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw IoError("bad checkpoint magic");
  const std::uint32_t version = read_u32(in);
  if (version != kVersion) throw IoError("unsupported checkpoint version");
  const std::uint32_t count = read_u32(in);
  ParamSet ps;
  for (std::uint32_t g = 0; g < count; ++g) {
    const std::uint32_t name_len = read_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const std::uint32_t rows = read_u32(in);
    const std::uint32_t cols = read_u32(in);
    if (!in) throw IoError("checkpoint truncated");
    Eigen::MatrixXd& v = ps.add(name, static_cast<int>(rows), static_cast<int>(cols));
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c) {
        double d = 0.0;
        in.read(reinterpret_cast<char*>(&d), sizeof(d));
        v(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = d;
      }
    if (!in) throw IoError("checkpoint truncated");
  }
  return ps;
}

ad::Var BoundParams::at(const std::string& name) const {
  auto it = vars.find(name);
  if (it == vars.end()) throw InvalidParameter("parameter group not bound: " + name);
  return it->second;
}

BoundParams bind_params(ad::Tape& tape, const ParamSet& params, bool requires_grad) {
  BoundParams bound;
  bound.tape = &tape;
  for (const auto& name : params.names())
    bound.vars.emplace(name, tape.leaf(params.value(name), requires_grad));
  return bound;
}

double compute_gradients(ParamSet& params, const LossBuilder& build) {
  params.zero_grads();
  ad::Tape tape;
  BoundParams bound = bind_params(tape, params, true);
  const ad::Var loss = build(tape, bound);
  const double v = tape.scalar(loss);
  if (!std::isfinite(v)) throw NumericalError("loss is not finite");
  tape.backward(loss);
  for (const auto& name : params.names()) params.grad(name) += tape.grad(bound.at(name));
  return v;
}

double loss_value(const ParamSet& params, const LossBuilder& build) {
  ad::Tape tape;
  BoundParams bound = bind_params(tape, params, false);
  const double v = tape.scalar(build(tape, bound));
  if (!std::isfinite(v)) throw NumericalError("loss is not finite");
  return v;
}

double finite_difference_check(ParamSet& params, const std::function<double(const ParamSet&)>& loss,
                               double eps) {
  return finite_difference_check(params, loss, eps, params.names());
}

double finite_difference_check(ParamSet& params, const std::function<double(const ParamSet&)>& loss,
                               double eps, const std::vector<std::string>& groups) {
  if (eps <= 0.0) throw InvalidParameter("finite-difference eps must be > 0");
  double worst = 0.0;
  for (const auto& name : groups) {
    Eigen::MatrixXd& v = params.value(name);
    const Eigen::MatrixXd& analytic = params.grad(name);
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
      for (Eigen::Index c = 0; c < v.cols(); ++c) {
        const double original = v(r, c);
        v(r, c) = original + eps;
        const double plus = loss(params);
        v(r, c) = original - eps;
        const double minus = loss(params);
        v(r, c) = original;
        const double numeric = (plus - minus) / (2.0 * eps);
        const double a = analytic(r, c);
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
        worst = std::max(worst, std::abs(a - numeric) / denom);
      }
    }
  }
  return worst;
}

Mlp::Mlp(std::string prefix, std::vector<int> dims) : prefix(std::move(prefix)), dims(std::move(dims)) {
  if (this->dims.size() < 2) throw InvalidParameter("mlp needs at least one affine layer");
}

void Mlp::init(ParamSet& params, RngStream& rng) const {
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    params.add_uniform(prefix + ".w" + std::to_string(l), dims[l], dims[l + 1], rng);
    params.add(prefix + ".b" + std::to_string(l), 1, dims[l + 1]);
  }
}

ad::Var Mlp::apply(ad::Tape& tape, const BoundParams& bound, ad::Var input) const {
  if (tape.value(input).cols() != dims.front())
    throw ShapeError(prefix + ": input width " + std::to_string(tape.value(input).cols()) +
                     " != fan-in " + std::to_string(dims.front()));
  ad::Var h = input;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    h = tape.add_rowvec(tape.matmul(h, bound.at(prefix + ".w" + std::to_string(l))),
                        bound.at(prefix + ".b" + std::to_string(l)));
    if (l + 2 < dims.size()) h = tape.silu(h);
  }
  return h;
}

Eigen::VectorXd Mlp::apply(const ParamSet& params, const Eigen::VectorXd& input) const {
  ad::Tape tape;
  BoundParams bound = bind_params(tape, params, false);
  const ad::Var in = tape.leaf(input.transpose(), false);
  return tape.value(apply(tape, bound, in)).row(0);
}

}  // namespace protmd
