#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "test_util.hpp"

using namespace modcap;
using namespace modcap::testing;

TEST(Vocabulary, MinCountFilter) {
  std::vector<TokenSeq> corpus;
  for (int i = 0; i < 6; ++i) corpus.push_back({"cat"});
  for (int i = 0; i < 4; ++i) corpus.push_back({"zebra"});
  auto v = build_vocabulary(corpus, 5);
  EXPECT_TRUE(v.contains("cat"));
  EXPECT_FALSE(v.contains("zebra"));
  EXPECT_EQ(v.lookup("zebra"), kUnk);
  EXPECT_EQ(v.size(), kReservedTokens.size() + 1);
}

TEST(Vocabulary, ReservedIdsAndLowercase) {
  auto v = build_vocabulary({{"Red", "CAT", "red"}, {"cat", "<eos>"}}, 1);
  EXPECT_EQ(v.token(kBos), "<bos>");
  EXPECT_EQ(v.token(kEos), "<eos>");
  EXPECT_EQ(v.token(kUnk), "<unk>");
  EXPECT_EQ(v.token(kPad), "<pad>");
  EXPECT_EQ(v.lookup("<eos>"), kEos);
  EXPECT_TRUE(v.contains("red"));
  EXPECT_FALSE(v.contains("Red"));
  EXPECT_EQ(v.encode({"RED", "Cat"}), (std::vector<std::size_t>{v.lookup("red"), v.lookup("cat")}));
  EXPECT_EQ(v.size(), 6u);
  EXPECT_THROW(v.token(99), ContractError);
}

TEST(Vocabulary, FrequencyOrderTiesAlphabetical) {
  auto v = build_vocabulary({{"b", "a", "c", "c"}}, 1);
  EXPECT_EQ(v.words(), (std::vector<std::string>{"c", "a", "b"}));
}

TEST(Lexicon, SetsAreDisjoint) {
  const auto lex = default_lexicon();
  const auto all = lex.all_tokens();
  EXPECT_EQ(std::set<std::string>(all.begin(), all.end()).size(), all.size());
  EXPECT_EQ(lex.num_objects(), 12u);
  EXPECT_EQ(lex.labels(Category::kColor).size(), 6u);
  EXPECT_EQ(lex.labels(Category::kCount).size(), 4u);
  EXPECT_EQ(lex.labels(Category::kSize).size(), 2u);
  EXPECT_EQ(lex.labels(Category::kSpatial).size(), 3u);
  EXPECT_EQ(lex.labels(Category::kSemantic).size(), 4u);
  std::array<std::vector<std::string>, kNumModules> bad{
      {{"red"}, {"two"}, {"small"}, {"on"}, {"red"}}};
  EXPECT_THROW(SubcategoryLexicon({"cat"}, bad), ContractError);
}

TEST(Lexicon, JsonRoundTrip) {
  const auto lex = default_lexicon();
  EXPECT_EQ(SubcategoryLexicon::from_json(lex.to_json()), lex);
  auto j = lex.to_json();
  j.erase("size");
  EXPECT_THROW(SubcategoryLexicon::from_json(j), ContractError);
}

TEST(Lexicon, CheckInVocabulary) {
  const auto lex = default_lexicon();
  EXPECT_THROW(lex.check_in(build_vocabulary({{"cat"}}, 1)), ContractError);
  EXPECT_NO_THROW(lex.check_in(build_vocabulary({lex.all_tokens()}, 1)));
}

TEST(Scenes, NoiselessTwoRedCats) {
  auto cfg = small_scene_config(0.0);
  cfg.semantic_probability = 0.0;
  const auto& lex = cfg.lexicon;
  std::optional<Scene> found;
  for (std::uint64_t seed = 0; seed < 20000 && !found; ++seed) {
    auto s = generate_scene(seed, cfg);
    if (s.objects.size() == 1 && s.objects[0].noun == "cat" && s.objects[0].count == 2 && s.objects[0].color &&
        *s.objects[0].color == "red")
      found = s;
  }
  ASSERT_TRUE(found.has_value());
  const auto& s = *found;
  std::vector<std::size_t> filled;
  for (std::size_t r = 0; r < s.num_regions(); ++r) {
    double n = 0;
    for (std::size_t c = 0; c < s.feature_dim(); ++c) n += std::abs(s.features(r, c));
    if (n > 0) filled.push_back(r);
  }
  ASSERT_EQ(filled.size(), 2u);
  for (std::size_t c = 0; c < s.feature_dim(); ++c)
    EXPECT_EQ(s.features(filled[0], c), s.features(filled[1], c));
  const FeatureLayout layout(lex);
  EXPECT_EQ(s.features(filled[0], layout.object + *lex.object_index("cat")), 1.0);
  EXPECT_EQ(s.features(filled[0], layout.color + 0), 1.0);
  const std::vector<AttributeTuple> expected{{"color", "cat", "red"}, {"count", "cat", "two"}};
  EXPECT_EQ(s.gt_tuples, expected);
  EXPECT_EQ(s.gt_objects, std::vector<std::string>{"cat"});
  EXPECT_EQ(s.references[0], (TokenSeq{"two", "red", "cats"}));
}

TEST(Scenes, DeterministicPerSeed) {
  const auto cfg = small_scene_config();
  EXPECT_EQ(generate_scene(77, cfg), generate_scene(77, cfg));
  EXPECT_NE(generate_scene(77, cfg).features, generate_scene(78, cfg).features);
}

TEST(Scenes, StructuralInvariants) {
  const auto cfg = small_scene_config();
  for (const auto& s : generate_scenes(0, 500, cfg)) {
    ASSERT_GE(s.objects.size(), 1u);
    ASSERT_LE(s.objects.size(), 3u);
    int total = 0;
    std::set<std::string> nouns;
    for (const auto& o : s.objects) {
      EXPECT_GE(o.count, 1);
      EXPECT_LE(o.count, 4);
      EXPECT_NE(o.color.has_value(), o.size.has_value());
      nouns.insert(o.noun);
      total += o.count;
    }
    EXPECT_EQ(nouns.size(), s.objects.size());
    EXPECT_LE(total, 6);
    EXPECT_EQ(s.spatial.has_value(), s.objects.size() >= 2);
    EXPECT_EQ(s.references.size(), 3u);
    EXPECT_EQ(s.features.shape(), (Shape{6, 64}));
  }
}

TEST(Scenes, ColorRecoverableFromFeatures) {
  const auto cfg = small_scene_config(0.1);
  const auto& lex = cfg.lexicon;
  const FeatureLayout layout(lex);
  const auto ncol = lex.labels(Category::kColor).size();
  std::size_t regions = 0, correct = 0;
  for (std::uint64_t seed = 0; regions < 500; ++seed) {
    auto s = generate_scene(seed, cfg);
    // the object probe picks the owner; its color is argmax over the color block
    for (std::size_t r = 0; r < s.num_regions() && regions < 500; ++r) {
      std::size_t best_obj = 0;
      for (std::size_t k = 1; k < lex.num_objects(); ++k)
        if (s.features(r, layout.object + k) > s.features(r, layout.object + best_obj)) best_obj = k;
      if (s.features(r, layout.object + best_obj) < 0.5) continue;
      const SceneObject* owner = nullptr;
      for (const auto& o : s.objects)
        if (o.noun == lex.objects()[best_obj]) owner = &o;
      if (!owner || !owner->color) continue;
      std::size_t best = 0;
      for (std::size_t c = 1; c < ncol; ++c)
        if (s.features(r, layout.color + c) > s.features(r, layout.color + best)) best = c;
      ++regions;
      if (lex.labels(Category::kColor)[best] == *owner->color) ++correct;
    }
  }
  EXPECT_GE(double(correct) / double(regions), 0.99);
}

TEST(Scenes, InvalidConfigRejected) {
  auto cfg = small_scene_config();
  cfg.feature_dim = 10;
  EXPECT_THROW(generate_scene(1, cfg), ConfigError);
  cfg = small_scene_config();
  cfg.max_count = 5;
  EXPECT_THROW(generate_scene(1, cfg), ConfigError);
  cfg = small_scene_config();
  cfg.noise_sigma = -1;
  EXPECT_THROW(generate_scene(1, cfg), ConfigError);
}

TEST(Render, Examples) {
  const auto lex = default_lexicon();
  Scene a;
  a.objects = {SceneObject{"cat", 2, "red", std::nullopt}};
  a.semantic = "sitting";
  EXPECT_EQ(render_caption(a, 0, lex), (TokenSeq{"two", "red", "cats", "sitting"}));
  EXPECT_EQ(render_caption(a, 1, lex), (TokenSeq{"two", "red", "cats"}));
  EXPECT_EQ(render_caption(a, 2, lex), (TokenSeq{"two", "cats", "sitting"}));

  Scene b;
  b.objects = {SceneObject{"cat", 1, "red", std::nullopt}, SceneObject{"table", 1, std::nullopt, "large"}};
  b.spatial = "on";
  EXPECT_EQ(render_caption(b, 0, lex), (TokenSeq{"a", "red", "cat", "on", "a", "large", "table"}));
  EXPECT_EQ(render_caption(b, 3, lex), render_caption(b, 0, lex));
  const std::vector<AttributeTuple> tuples{{"color", "cat", "red"},
                                           {"count", "cat", "a"},
                                           {"count", "table", "a"},
                                           {"size", "table", "large"},
                                           {"spatial", "cat", "on"}};
  EXPECT_EQ(scene_tuples(b, lex), tuples);
}

TEST(Supervision, TwoRedCats) {
  const auto lex = default_lexicon();
  const auto sup = derive_supervision({"two", "red", "cats", "<eos>"}, lex);
  ASSERT_EQ(sup.size(), 4u);
  const auto count = module_slot(Category::kCount), color = module_slot(Category::kColor);
  EXPECT_EQ(sup.active_module, (std::vector<std::size_t>{count, color, kInitSlot, kInitSlot}));
  EXPECT_EQ(sup.module_labels, (std::vector<int>{1, 0, -1, -1}));
  EXPECT_TRUE(sup.module_masks[0][count]);
  EXPECT_TRUE(sup.any_attribute(1));
  EXPECT_FALSE(sup.any_attribute(2));
  for (std::size_t t = 0; t < sup.size(); ++t) {
    int active = 0;
    for (bool b : sup.module_masks[t]) active += b;
    EXPECT_LE(active, 1);
  }
}

TEST(Supervision, ExampleAlignment) {
  const auto cfg = small_scene_config();
  const auto scenes = generate_scenes(0, 20, cfg);
  std::vector<TokenSeq> corpus;
  for (const auto& s : scenes) corpus.push_back(s.references[0]);
  corpus.push_back(cfg.lexicon.all_tokens());
  const auto vocab = build_vocabulary(corpus, 1);
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto ex = make_example(scenes[i], i, scenes[i].references[0], vocab, cfg.lexicon);
    EXPECT_EQ(ex.inputs.size(), ex.targets.size());
    EXPECT_EQ(ex.inputs.front(), kBos);
    EXPECT_EQ(ex.targets.back(), kEos);
    EXPECT_EQ(ex.supervision.size(), ex.targets.size());
    for (std::size_t t = 1; t < ex.inputs.size(); ++t) EXPECT_EQ(ex.inputs[t], ex.targets[t - 1]);
    double on = 0;
    for (double v : ex.object_targets) on += v;
    EXPECT_EQ(on, double(scenes[i].objects.size()));
  }
}

TEST(Dataset, RoundTrip) {
  const auto scenes = generate_scenes(100, 5, small_scene_config());
  std::stringstream ss;
  write_dataset(ss, scenes);
  const auto back = read_dataset(ss);
  ASSERT_EQ(back.size(), scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i) EXPECT_EQ(back[i], scenes[i]);
}

TEST(Dataset, MalformedLineNamesLine) {
  const auto scenes = generate_scenes(100, 2, small_scene_config());
  std::stringstream ss;
  write_dataset(ss, scenes);
  std::string text = ss.str();
  text.insert(text.find('\n') + 1, "{\"id\": 3,,}\n");
  std::istringstream is(text);
  try {
    read_dataset(is, "x.jsonl");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line, 2u);
    EXPECT_EQ(std::string(e.what()).rfind("x.jsonl:2:", 0), 0u);
  }
}

TEST(Dataset, EmptyInputIsEmpty) {
  std::istringstream is("");
  EXPECT_TRUE(read_dataset(is).empty());
  std::istringstream blank("\n  \n");
  EXPECT_TRUE(read_dataset(blank).empty());
}
