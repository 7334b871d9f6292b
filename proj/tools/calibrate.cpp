// Calibration sweep behind the dataset defaults: for a grid of
// (cluster_sigma, alignment_eta) values it rebuilds the reference world and
// prints the frozen model's accuracy on the streamed classes and on the
// held-out classes. The shipped defaults were picked so the untuned baseline
// lands in the 60-75% band.
//
//   ollab_calibrate [--seeds N] [--sigma s1,s2,...] [--eta e1,e2,...]

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ollab/datagen.hpp"
#include "ollab/experiment.hpp"
#include "ollab/trainer.hpp"

using namespace ollab;

namespace {

double baseline_accuracy(const Dataset& ds, const ModelParams& model) {
  std::vector<int> ids = ds.trainable_class_ids();
  std::vector<Vec> descriptors;
  std::vector<Sample> samples;
  for (int c : ids) {
    descriptors.push_back(ds.descriptor_of(c));
    const auto& t = ds.test[static_cast<std::size_t>(c)];
    samples.insert(samples.end(), t.begin(), t.end());
  }
  return evaluate(model, ids, descriptors, samples).accuracy;
}

}  // namespace

int main(int argc, char** argv) {
  int num_seeds = 5;
  std::vector<double> sigmas = {0.05, 0.10, 0.20};
  std::vector<double> etas = {0.0, 0.4, 0.6, 0.85, 1.0, 1.4, 2.0};

  CLI::App app{"dataset default calibration sweep"};
  app.add_option("--seeds", num_seeds, "dataset seeds to average over");
  app.add_option("--sigma", sigmas, "cluster_sigma values");
  app.add_option("--eta", etas, "alignment_eta values");
  CLI11_PARSE(app, argc, argv);

  std::printf("%8s %8s %12s %12s\n", "sigma", "eta", "baseline", "held_out");
  for (double sigma : sigmas) {
    for (double eta : etas) {
      double acc = 0.0, zs = 0.0;
      for (int s = 0; s < num_seeds; ++s) {
        DatagenConfig gen;
        gen.cluster_sigma = sigma;
        std::uint64_t seed = 7 + static_cast<std::uint64_t>(s);
        Dataset ds = generate_dataset(gen, seed);

        ModelConfig mc;
        mc.d_in = ds.d_in;
        mc.d_desc = ds.d_in;
        mc.pet_kind = PetKind::None;
        ModelParams model = init_model(mc, derive_seed(seed, 0x90de1));
        make_descriptors(ds, model, eta, derive_seed(seed, 0xde5c));

        acc += baseline_accuracy(ds, model);
        zs += zero_shot_eval(model, ds);
      }
      std::printf("%8.3f %8.3f %11.1f%% %11.1f%%\n", sigma, eta,
                  100.0 * acc / num_seeds, 100.0 * zs / num_seeds);
    }
  }
  return 0;
}
