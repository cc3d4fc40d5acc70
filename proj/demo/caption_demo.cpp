// Train a small captioner on a handful of scenes, then show what it says
// and which module it leaned on for each word.
//
//   caption_demo [scenes=12] [epochs=80]

#include <cstdlib>
#include <iomanip>
#include <iostream>

#include "modcap/modcap.hpp"

using namespace modcap;

int main(int argc, char** argv) {
  const std::size_t n = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 12;
  const std::size_t epochs = argc > 2 ? std::strtoul(argv[2], nullptr, 10) : 80;
  if (n == 0 || epochs == 0) {
    std::cerr << "usage: caption_demo [scenes] [epochs]\n";
    return 2;
  }

  SceneConfig sc;
  sc.noise_sigma = 0.0;
  const auto scenes = generate_scenes(7, n, sc, "demo");
  auto cap = make_captioner<double>(scenes, sc.lexicon, ModelConfig::desk(0, sc.lexicon), 1, 7);

  auto tc = TrainConfig::desk();
  tc.epochs = epochs;
  tc.anneal_start_epoch = epochs / 2;
  tc.batch_size = std::min<std::size_t>(n, 8);
  tc.seed = 7;
  Trainer<double> tr(cap, scenes, tc);
  tr.run({}, [](const EpochRecord& e) {
    if (e.epoch % 10 == 0) std::cout << "epoch " << std::setw(4) << e.epoch << "  loss " << e.total << '\n';
  });

  const auto decoded = decode_all(cap, scenes);
  std::cout << '\n';
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    std::cout << scenes[i].id << "\n  ref: " << join_tokens(scenes[i].references[0])
              << "\n  got: " << join_tokens(decoded[i].tokens) << '\n';
  }
  const auto rep = score(decoded, scenes, sc.lexicon);
  std::cout << "\ntraining-set BLEU-4 " << rep.bleu[3] << "  count f " << rep.fscore.at("count") << "  color f "
            << rep.fscore.at("color") << "\n\n";

  // module attention for the first scene
  std::cout << std::left << std::setw(10) << "word";
  for (const auto& m : kModuleNames) std::cout << std::setw(10) << m;
  std::cout << "init\n" << std::fixed << std::setprecision(3);
  for (const auto& row : decoded[0].trace) {
    std::cout << std::setw(10) << row.token;
    for (double a : row.alpha_hat) std::cout << std::setw(10) << a;
    std::cout << '\n';
  }
  return 0;
}
