#pragma once

// Per-progress bivariate Gaussian motion models and the model database.

#include "qpexo/core.hpp"
#include "qpexo/io.hpp"
#include "qpexo/trace.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <json.hpp>

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace qpexo {

inline constexpr int kModelDbVersion = 1;
inline const std::string kOtherClass = "other";

struct MotionModel {
  std::string name;
  std::vector<Vec2> mean;
  std::vector<Mat2> cov;
  std::vector<Mat2> cov_inv;
  std::size_t n_demos = 0;

  std::size_t grid_size() const { return mean.size(); }

  /// Recomputes the cached inverses; throws if any covariance is not SPD.
  void refresh_inverse() {
    if (cov.size() != mean.size()) throw ValidationError("model '" + name + "': mean/cov length mismatch");
    cov_inv.resize(cov.size());
    for (std::size_t n = 0; n < cov.size(); ++n) {
      const Mat2& c = cov[n];
      if (!c.allFinite() || std::abs(c(0, 1) - c(1, 0)) > 1e-12 * std::max(1.0, c.cwiseAbs().maxCoeff()))
        throw ValidationError("model '" + name + "': covariance not symmetric at grid " + std::to_string(n));
      Eigen::LLT<Mat2> llt(c);
      if (llt.info() != Eigen::Success)
        throw ValidationError("model '" + name + "': covariance not positive definite at grid " + std::to_string(n));
      cov_inv[n] = c.inverse();
    }
  }

  /// Convenience builder used by tests and generators.
  static MotionModel from_moments(std::string name, std::vector<Vec2> mean, std::vector<Mat2> cov, std::size_t n_demos = 0) {
    MotionModel m;
    m.name = std::move(name);
    m.mean = std::move(mean);
    m.cov = std::move(cov);
    m.n_demos = n_demos;
    m.refresh_inverse();
    return m;
  }
};

/// Sample mean and unbiased sample covariance plus a ridge of `reg`·I at every grid point.
inline MotionModel learn_model(const std::vector<NormalizedDemo>& demos, double reg = 1e-6, std::string name = "model") {
  if (demos.size() < 2) throw ValidationError("learning a model needs at least 2 demos");
  if (reg < 0.0) throw ValidationError("regularization must be nonnegative");
  const std::size_t grid = demos.front().values.size();
  for (const auto& d : demos)
    if (d.values.size() != grid) throw ValidationError("demos have different grid sizes");
  const double count = static_cast<double>(demos.size());

  std::vector<Vec2> mean(grid, Vec2::Zero());
  std::vector<Mat2> cov(grid, Mat2::Zero());
  for (std::size_t n = 0; n < grid; ++n) {
    for (const auto& d : demos) mean[n] += d.values[n];
    mean[n] /= count;
    for (const auto& d : demos) {
      const Vec2 e = d.values[n] - mean[n];
      cov[n] += e * e.transpose();
    }
    cov[n] /= count - 1.0;
    cov[n] += reg * Mat2::Identity();
  }
  return MotionModel::from_moments(std::move(name), std::move(mean), std::move(cov), demos.size());
}

struct ModelDatabase {
  std::vector<MotionModel> models;
  /// One prior per model, in model order, followed by the "other" prior.
  std::vector<double> priors;

  double prior_other() const { return priors.back(); }

  const MotionModel* find(const std::string& name) const {
    for (const auto& m : models)
      if (m.name == name) return &m;
    return nullptr;
  }

  static std::vector<double> uniform_priors(std::size_t n_models) {
    return std::vector<double>(n_models + 1, 1.0 / static_cast<double>(n_models + 1));
  }

  void validate() const {
    std::set<std::string> names;
    for (const auto& m : models) {
      if (m.name == kOtherClass) throw ValidationError("model name 'other' is reserved");
      if (!names.insert(m.name).second) throw ValidationError("duplicate model name '" + m.name + "'");
      if (m.mean.size() != m.cov.size() || m.cov_inv.size() != m.cov.size())
        throw ValidationError("model '" + m.name + "' is incomplete");
    }
    if (priors.size() != models.size() + 1) throw ValidationError("need one prior per model plus 'other'");
    double sum = 0.0;
    for (double p : priors) {
      if (!(p >= 0.0)) throw ValidationError("priors must be nonnegative");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("priors must sum to 1 (got " + io::format_double(sum) + ")");
  }
};

inline nlohmann::json to_json(const ModelDatabase& db) {
  using nlohmann::json;
  json doc;
  doc["version"] = kModelDbVersion;
  const std::size_t grid = db.models.empty() ? kGridSize : db.models.front().grid_size();
  json g = json::array();
  for (std::size_t n = 0; n < grid; ++n) g.push_back(grid_progress(n, grid));
  doc["grid"] = std::move(g);
  json models = json::array();
  for (const auto& m : db.models) {
    json jm;
    jm["name"] = m.name;
    jm["n_demos"] = m.n_demos;
    json mean = json::array(), cov = json::array();
    for (std::size_t n = 0; n < m.grid_size(); ++n) {
      mean.push_back({m.mean[n].x(), m.mean[n].y()});
      cov.push_back({{m.cov[n](0, 0), m.cov[n](0, 1)}, {m.cov[n](1, 0), m.cov[n](1, 1)}});
    }
    jm["mean"] = std::move(mean);
    jm["cov"] = std::move(cov);
    models.push_back(std::move(jm));
  }
  doc["models"] = std::move(models);
  json priors = json::object();
  for (std::size_t j = 0; j < db.models.size(); ++j) priors[db.models[j].name] = db.priors[j];
  priors[kOtherClass] = db.priors.back();
  doc["priors"] = std::move(priors);
  return doc;
}

/// Missing or empty `priors` falls back to uniform over the models and "other".
inline ModelDatabase model_db_from_json(const nlohmann::json& doc) {
  try {
    if (!doc.is_object()) throw ParseError("model db must be a JSON object");
    if (!doc.contains("version") || doc.at("version").get<int>() != kModelDbVersion)
      throw ValidationError("model db version mismatch (expected " + std::to_string(kModelDbVersion) + ")");
    ModelDatabase db;
    const auto& grid = doc.at("grid");
    for (const auto& jm : doc.at("models")) {
      MotionModel m;
      m.name = jm.at("name").get<std::string>();
      m.n_demos = jm.value("n_demos", std::size_t{0});
      const auto& mean = jm.at("mean");
      const auto& cov = jm.at("cov");
      if (mean.size() != grid.size() || cov.size() != grid.size())
        throw ValidationError("model '" + m.name + "' does not match the grid");
      for (std::size_t n = 0; n < mean.size(); ++n) {
        m.mean.emplace_back(mean[n].at(0).get<double>(), mean[n].at(1).get<double>());
        Mat2 c;
        c << cov[n].at(0).at(0).get<double>(), cov[n].at(0).at(1).get<double>(), cov[n].at(1).at(0).get<double>(),
            cov[n].at(1).at(1).get<double>();
        m.cov.push_back(c);
      }
      m.refresh_inverse();
      db.models.push_back(std::move(m));
    }
    const bool has_priors = doc.contains("priors") && doc.at("priors").is_object() && !doc.at("priors").empty();
    if (!has_priors) {
      db.priors = ModelDatabase::uniform_priors(db.models.size());
    } else {
      const auto& jp = doc.at("priors");
      if (jp.size() != db.models.size() + 1) throw ValidationError("priors must list every model and 'other'");
      for (const auto& m : db.models) {
        if (!jp.contains(m.name)) throw ValidationError("missing prior for model '" + m.name + "'");
        db.priors.push_back(jp.at(m.name).get<double>());
      }
      if (!jp.contains(kOtherClass)) throw ValidationError("missing prior for 'other'");
      db.priors.push_back(jp.at(kOtherClass).get<double>());
    }
    db.validate();
    return db;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("corrupt model db: ") + e.what());
  }
}

inline void save_db(const ModelDatabase& db, const std::filesystem::path& path) {
  db.validate();
  io::write_file_atomic(path, to_json(db).dump(2) + "\n");
}

inline ModelDatabase load_db(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("corrupt model db: ") + e.what());
  }
  return model_db_from_json(doc);
}

}  // namespace qpexo
