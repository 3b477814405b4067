#include "nbode/model.hpp"

#include <cmath>
#include <random>

#include <json.hpp>

#include "nbode/binary_io.hpp"

namespace nbode {

std::string activation_name(Activation a) { return a == Activation::Tanh ? "tanh" : "identity"; }

Activation activation_from_name(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "identity") return Activation::Identity;
  throw ArgumentError("unknown activation '" + name + "'");
}

std::size_t MlpVectorField::param_count() const {
  std::size_t p = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    p += static_cast<std::size_t>(dims[l]) * dims[l + 1] + dims[l + 1];
  }
  return p;
}

std::vector<double> MlpVectorField::flatten() const {
  std::vector<double> flat;
  flat.reserve(param_count());
  for (std::size_t l = 0; l < weights.size(); ++l) {
    flat.insert(flat.end(), weights[l].data(), weights[l].data() + weights[l].size());
    flat.insert(flat.end(), biases[l].data(), biases[l].data() + biases[l].size());
  }
  return flat;
}

void MlpVectorField::assign(std::span<const double> flat) {
  if (flat.size() != param_count()) throw ArgumentError("parameter vector has the wrong length");
  std::size_t pos = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    std::copy_n(flat.data() + pos, weights[l].size(), weights[l].data());
    pos += static_cast<std::size_t>(weights[l].size());
    std::copy_n(flat.data() + pos, biases[l].size(), biases[l].data());
    pos += static_cast<std::size_t>(biases[l].size());
  }
}

std::vector<int> default_dims(int d) { return {d, 64, 64, d}; }

MlpVectorField init_params(std::uint64_t seed, const std::vector<int>& dims, Activation activation) {
  if (dims.size() < 2) throw ArgumentError("an MLP needs at least two layer sizes");
  for (int n : dims) {
    if (n < 1) throw ArgumentError("layer sizes must be positive");
  }
  if (dims.front() != dims.back()) throw ArgumentError("a vector field needs equal input and output sizes");
  MlpVectorField m;
  m.dims = dims;
  m.activation = activation;
  m.seed = seed;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const double bound = std::sqrt(1.0 / dims[l]);
    std::uniform_real_distribution<double> uni(-bound, bound);
    RowMat w(dims[l + 1], dims[l]);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = uni(rng);
    m.weights.push_back(std::move(w));
    m.biases.push_back(RowMat::Zero(1, dims[l + 1]));
  }
  return m;
}

LayerParams<ad::Tensor> tensor_params(const MlpVectorField& m) {
  LayerParams<ad::Tensor> p;
  p.activation = m.activation;
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    p.w.emplace_back(m.weights[l]);
    p.b.emplace_back(m.biases[l]);
  }
  return p;
}

LayerParams<ad::Var> tape_params(const MlpVectorField& m, ad::Tape& tape) {
  LayerParams<ad::Var> p;
  p.activation = m.activation;
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    p.w.push_back(tape.leaf(m.weights[l]));
    p.b.push_back(tape.leaf(m.biases[l]));
  }
  return p;
}

std::vector<double> gather_grads(const LayerParams<ad::Var>& p, const ad::Tape& tape) {
  std::vector<double> g;
  for (std::size_t l = 0; l < p.w.size(); ++l) {
    const RowMat gw = tape.grad(p.w[l]);
    const RowMat gb = tape.grad(p.b[l]);
    g.insert(g.end(), gw.data(), gw.data() + gw.size());
    g.insert(g.end(), gb.data(), gb.data() + gb.size());
  }
  return g;
}

namespace {

void check_input(const MlpVectorField& m, Eigen::Index cols) {
  if (cols != m.dim()) {
    throw ArgumentError("model expects dimension " + std::to_string(m.dim()) + ", got " + std::to_string(cols));
  }
}

}  // namespace

RowMat model_field_batch(const MlpVectorField& m, const RowMat& u) {
  check_input(m, u.cols());
  RowMat h = u, z;
  const std::size_t layers = m.weights.size();
  for (std::size_t l = 0; l < layers; ++l) {
    z.noalias() = h * m.weights[l].transpose();
    z.rowwise() += m.biases[l].row(0);
    if (l + 1 < layers && m.activation == Activation::Tanh) ad::tanh_inplace(z);
    h.swap(z);
  }
  return h;
}

Vec model_field(const MlpVectorField& m, const Vec& u) {
  check_input(m, u.size());
  const RowMat out = model_field_batch(m, RowMat(u.transpose()));
  return out.row(0).transpose();
}

Mat model_jacobian(const MlpVectorField& m, const Vec& u) {
  check_input(m, u.size());
  const int d = m.dim();
  // One base point with d tangent rows; tangent row k is J e_k.
  const ad::Dual<ad::Tensor> x{ad::Tensor(RowMat(u.transpose())), ad::Tensor(RowMat::Identity(d, d))};
  const auto out = mlp_forward(tensor_params(m), x);
  return out.t.value().transpose();
}

void save_model(const MlpVectorField& m, const std::filesystem::path& dir, const CheckpointInfo& info) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json j;
  j["dims"] = m.dims;
  j["activation"] = activation_name(m.activation);
  j["seed"] = m.seed;
  j["step"] = info.step;
  j["val_loss"] = info.val_loss;
  j["param_count"] = m.param_count();
  io::write_text(dir / "model.json", j.dump(2) + "\n");
  io::write_f64(dir / "params.bin", m.flatten());
}

MlpVectorField load_model(const std::filesystem::path& dir, CheckpointInfo* info) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_text(dir / "model.json"));
    MlpVectorField m = init_params(j.at("seed").get<std::uint64_t>(), j.at("dims").get<std::vector<int>>(),
                                   activation_from_name(j.at("activation").get<std::string>()));
    m.assign(io::read_f64(dir / "params.bin", m.param_count()));
    if (info) {
      info->step = j.at("step").get<long>();
      info->val_loss = j.at("val_loss").is_null() ? std::nan("") : j.at("val_loss").get<double>();
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("invalid model.json in " + dir.string() + ": " + e.what());
  }
}

}  // namespace nbode
