// Trains on a few synthetic demos, builds the utility table and replays one
// stoop-left lift through the E-UMC, printing the decision timeline.

#include "qpexo/controllers.hpp"
#include "qpexo/motion_model.hpp"
#include "qpexo/simulator.hpp"
#include "qpexo/synthetic.hpp"
#include "qpexo/utility.hpp"

#include <iostream>

int main() {
  using namespace qpexo;
  SyntheticConfig syn;
  ModelDatabase db;
  for (std::uint32_t c = 0; c < kLiftClasses.size(); ++c) {
    std::vector<NormalizedDemo> demos;
    for (std::uint32_t k = 0; k < 8; ++k) {
      auto rng = trace_rng(7, 1, c, k);
      demos.push_back(normalize(segment(generate_lift(kLiftClasses[c], rng, syn, true)).front()));
    }
    db.models.push_back(learn_model(demos, 1e-6, kLiftClasses[c]));
  }
  db.priors = ModelDatabase::uniform_priors(db.models.size());

  std::vector<HumanReference> refs;
  for (const auto& label : kLiftClasses) refs.push_back(lift_reference(label, syn));
  refs.push_back(walking_reference(syn));
  ActuatorConfig act;
  const auto table = build_utilities(refs, act, kLiftClasses);

  auto rng = trace_rng(7, 2, 1, 0);
  const auto trial = generate_lift("stoop_left", rng, syn);
  ControllerConfig ctrl;  // E-UMC by default
  const auto result = replay(trial, ctrl, act, &db, &table);

  for (const auto& r : result.log.rows) {
    if (!r.evaluated) continue;
    std::cout << "t=" << r.t << "s action=" << to_string(r.action) << " p_squat=" << r.p_motion[0].value_or(0)
              << " p_sl=" << r.p_motion[1].value_or(0) << " p_sr=" << r.p_motion[2].value_or(0) << " p_other=" << r.p_other
              << "\n";
  }
  std::cout << "peak torque left " << result.peak_tau_left << " N·m, right " << result.peak_tau_right << " N·m\n";
}
