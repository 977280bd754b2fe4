#pragma once

#include <optional>
#include <vector>

#include "pgalstm/core/params.hpp"
#include "pgalstm/core/tape.hpp"
#include "pgalstm/errors.hpp"
#include "pgalstm/models/depth_model.hpp"

namespace pgalstm {

// Objective weights. lambda_phy only applies to the PGL model.
struct LossWeights {
  double lambda_z = 1.0;
  double lambda_r = 1e-4;
  double lambda_phy = 1.0;

  void validate() const {
    if (lambda_z < 0 || lambda_r < 0 || lambda_phy < 0) throw UsageError("loss weights must be >= 0");
  }
};

// Weighted contributions of each term; total is their sum.
struct LossTerms {
  Var total;
  Var y;
  std::optional<Var> z;
  std::optional<Var> r;
  std::optional<Var> phy;
};

struct LossValues {
  double y = 0.0;
  double z = 0.0;
  double r = 0.0;
  double phy = 0.0;
  double total = 0.0;

  static LossValues of(const LossTerms& t) {
    LossValues v;
    v.y = t.y.value().item();
    if (t.z) v.z = t.z->value().item();
    if (t.r) v.r = t.r->value().item();
    if (t.phy) v.phy = t.phy->value().item();
    v.total = t.total.value().item();
    return v;
  }
};

// (1/N) sum over observed cells of (target - prediction)^2.
inline Var masked_mse(Tape& tape, Var prediction, const Tensor& target, const Tensor& mask,
                      std::size_t observations) {
  if (observations == 0) throw DataError("loss over zero observations");
  const Var diff = hadamard(sub(prediction, tape.constant(target)), tape.constant(mask));
  return scale(sum(square(diff)), 1.0 / static_cast<double>(observations));
}

// ||W||_2 over every parameter flagged as a weight (biases excluded).
inline Var weight_norm(const BoundParams& p) {
  std::vector<Var> parts;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p.params().entry(i).weight) parts.push_back(sum(square(p.at(i))));
  }
  if (parts.empty()) throw Error("weight_norm: no weight parameters");
  Var total = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) total = add(total, parts[i]);
  return sqrt(total);
}

// Loss(Y, Yhat) + lambda_z Loss(Z, Zhat) + lambda_r ||W||_2, plus
// lambda_phy * physics loss for PGL. Padded depths never reach here: the
// predictions and labels cover real depths only, and `mask` zeroes the
// unobserved ones. Terms with zero weight are left off the tape.
inline LossTerms composite_loss(Tape& tape, ModelKind kind, const DepthOutputs& out,
                                const DepthBatch& batch, const BoundParams& params,
                                const LossWeights& w, double density_std) {
  w.validate();
  LossTerms t;
  t.y = masked_mse(tape, out.temperature, batch.temperature, batch.mask, batch.observations);
  t.total = t.y;
  if (out.density && w.lambda_z > 0) {
    t.z = scale(masked_mse(tape, *out.density, batch.density, batch.mask, batch.observations), w.lambda_z);
    t.total = add(t.total, *t.z);
  }
  if (w.lambda_r > 0) {
    t.r = scale(weight_norm(params), w.lambda_r);
    t.total = add(t.total, *t.r);
  }
  if (kind == ModelKind::Pgl && w.lambda_phy > 0) {
    t.phy = scale(pgl_physics_loss(out.temperature, density_std), w.lambda_phy);
    t.total = add(t.total, *t.phy);
  }
  return t;
}

}  // namespace pgalstm
