// Regenerates the synthetic sample files under data/.
#include <fstream>
#include <iostream>

#include "nvloc/calibrate.hpp"
#include "nvloc/errors.hpp"
#include "nvloc/pipeline.hpp"

using namespace nvloc;

namespace {
void write(const std::string& path, const std::string& body) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  out << body;
}
}  // namespace

int main(int argc, char** argv) {
  const std::string dir = argc > 1 ? argv[1] : "data";
  const FrameRegistry reg;
  const Eigen::Vector3d dB_nv(-1.715e-3, 0.614e-3, -1.547e-3);
  const Eigen::Vector3d B0_nv(0.028e-3, -0.056e-3, 9.502e-3);
  const std::vector<std::string> nvs{"nv_000", "nv_090", "nv_180"};

  auto odmr = [&](const Eigen::Vector3d& b_nv, FieldContext ctx, const char* title) {
    OdmrDataset ds = synth_odmr(reg.to_frame(Vector3(b_nv, kTargetFrame), kLabFrame), nvs, reg, 0.05e6, 0.0, 1);
    ds.context = ctx;
    std::ostringstream s;
    s << "# " << title << ", noiseless lines from the S=1 Hamiltonian\n";
    write_odmr(s, ds);
    return s.str();
  };
  write(dir + "/odmr_coil.txt", odmr(dB_nv, FieldContext::CoilField, "coil field (-1.715, 0.614, -1.547) mT in nv_000"));
  write(dir + "/odmr_bias.txt", odmr(B0_nv, FieldContext::BiasField, "bias field (0.028, -0.056, 9.502) mT in nv_000"));

  // three coil positions, both polarities: the measured coil field and copies turned by 120 deg about the NV axis
  TruthSet t;
  t.seed = 238;
  t.B0 = B0_nv;
  const char* names[] = {"A", "B", "C"};
  for (int k = 0; k < 3; ++k) {
    const Eigen::Vector3d d = Eigen::AngleAxisd(k * 2.0 * std::numbers::pi / 3.0, Eigen::Vector3d::UnitZ()) * dB_nv;
    t.coils.push_back({std::string(names[k]) + "+", d});
    t.coils.push_back({std::string(names[k]) + "-", -d});
  }
  t.nuclei.push_back({"C1", {8.3e-10, deg2rad(58.0), deg2rad(238.0)}, 9e3});
  t.sigma_f = 100.0;
  t.sigma_fR = 100.0;
  t.sigma_fp = 250.0;
  t.sigma_field = 15e-6;
  std::ostringstream s;
  s << "# C1 site with the calibrated fields; coils B and C are synthetic rotations of coil A\n";
  write_truth(s, t);
  write(dir + "/c1_truth.txt", s.str());
  std::cout << "wrote odmr_coil.txt odmr_bias.txt c1_truth.txt to " << dir << "\n";
}
