#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "tsseg/random.hpp"
#include "tsseg/train.hpp"

using namespace tsseg;

namespace {

ArchSpec tiny(std::size_t classes = 3) {
  ArchSpec s;
  s.input_length = 64;
  s.depth = 3;
  s.base_width = 4;
  s.classes = classes;
  return s;
}

template <typename T>
bool same_weights(const Model<T>& a, const Model<T>& b) {
  const auto x = a.named_arrays(), y = b.named_arrays();
  if (x.size() != y.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!(*x[i].second == *y[i].second)) return false;
  return true;
}

template <typename T>
bool same_params(const Section<T>& a, const Section<T>& b) {
  const auto x = a.params(), y = b.params();
  for (std::size_t i = 0; i < x.size(); ++i)
    if (std::memcmp(x[i]->value.data(), y[i]->value.data(), x[i]->size() * sizeof(T)) != 0) return false;
  return true;
}

double displacement(const Section<float>& a, const Section<float>& b) {
  double d = 0.0;
  const auto x = a.params(), y = b.params();
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < x[i]->size(); ++j) d += std::pow(double(x[i]->value[j]) - y[i]->value[j], 2);
  return std::sqrt(d);
}

TrainConfig quick(std::size_t epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 4;
  c.seed = 3;
  return c;
}

}  // namespace

TEST_CASE("default multipliers") {
  ArchSpec s;
  const auto m = default_multipliers(s);
  REQUIRE(m.size() == 10);
  CHECK(m[0] == doctest::Approx(0.01));
  CHECK(m[2] == doctest::Approx(0.09));
  CHECK(m[8] == doctest::Approx(0.81));
  CHECK(m[9] == 1.0);
  CHECK(default_multipliers(tiny()).size() == 6);
}

TEST_CASE("zero epochs leaves the model unchanged") {
  const auto data = make_pretraining_set(6, 64, 1);
  auto m = Model<float>::build(tiny(), 1);
  const auto before = m;
  const auto r = train(m, data, quick(0));
  CHECK(same_weights(m, before));
  CHECK(r.history.empty());
  CHECK(r.best_epoch == 0);
}

TEST_CASE("training is deterministic") {
  const auto data = make_pretraining_set(8, 64, 2);
  auto a = Model<float>::build(tiny(), 1);
  auto b = a;
  const auto ra = train(a, data, quick(3));
  const auto rb = train(b, data, quick(3));
  CHECK(same_weights(a, b));
  REQUIRE(ra.history.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(ra.history[i].train_loss == rb.history[i].train_loss);
}

TEST_CASE("best validation weights are retained") {
  const auto data = make_pretraining_set(10, 64, 4);
  auto m = Model<float>::build(tiny(), 1);
  Model<float> last = m;
  const auto r = train<float>(m, data, quick(4), nullptr, &last);
  REQUIRE(r.best_epoch >= 1);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& h : r.history) best = std::min(best, h.val_loss);
  CHECK(r.history[r.best_epoch - 1].val_loss == best);
  CHECK(r.dice_loss == doctest::Approx(best).epsilon(1e-9));
  if (r.best_epoch != 4) CHECK_FALSE(same_weights(m, last));
}

TEST_CASE("overfit set loss falls over the first epochs") {
  const auto data = make_pretraining_set(16, 256, 1);
  ArchSpec s;
  s.input_length = 256;
  s.depth = 4;
  s.base_width = 8;
  s.classes = 3;
  auto m = Model<float>::build(s, 1);
  TrainConfig c;
  c.epochs = 5;
  c.batch_size = 8;
  c.base_lr = 5e-3;
  c.dice_epsilon = 16.0;
  c.val_fraction = 0.0;
  c.seed = 1;
  const auto r = train(m, data, c);
  REQUIRE(r.history.size() == 5);
  for (std::size_t i = 1; i < 5; ++i) CHECK(r.history[i].train_loss <= r.history[i - 1].train_loss);
}

TEST_CASE("uniform multipliers equal a scaled learning rate") {
  const auto data = make_pretraining_set(8, 64, 5);
  auto a = Model<float>::build(tiny(), 2);
  auto b = a;
  auto ca = quick(2), cb = quick(2);
  ca.section_lr_multipliers.assign(6, 0.5);
  cb.base_lr = 0.5e-3;
  train(a, data, ca);
  train(b, data, cb);
  CHECK(same_weights(a, b));
}

TEST_CASE("neutral multipliers reproduce plain training of the transplant") {
  const auto data = make_pretraining_set(8, 64, 6);
  const auto base = Model<float>::build(tiny(), 7);
  ArchSpec t = tiny();
  auto cfg = quick(2);
  cfg.section_lr_multipliers.assign(6, 1.0);
  const auto a = finetune_multipliers(base, t, data, cfg);
  auto b = transplant(base, t, cfg.seed);
  train(b, data, quick(2));
  CHECK(same_weights(a, b));
}

TEST_CASE("low multipliers move early sections less") {
  const auto data = make_pretraining_set(16, 64, 8);
  const auto base = Model<float>::build(tiny(), 9);
  ArchSpec t = tiny(1);
  auto shapes = make_shape_task_set(16, 64, 10);
  auto cfg = quick(1);
  cfg.val_fraction = 0.0;
  const auto tuned = finetune_multipliers(base, t, shapes, cfg);
  const auto start = transplant(base, t, cfg.seed);
  CHECK(displacement(tuned.section("enc1"), start.section("enc1")) <
        displacement(tuned.section("out"), start.section("out")));
  auto bad = cfg;
  bad.section_lr_multipliers.assign(5, 1.0);
  CHECK_THROWS_AS(finetune_multipliers(base, t, shapes, bad), SpecError);
}

TEST_CASE("frozen sections keep their bytes while batch norm stats move") {
  const auto data = make_pretraining_set(8, 64, 11);
  auto m = Model<float>::build(tiny(), 3);
  const auto before = m;
  auto cfg = quick(0);
  cfg.freeze_schedule = default_freeze_schedule(tiny(), 2, 1);
  CHECK(cfg.freeze_schedule[0].frozen == std::vector<std::string>{"enc1", "enc2"});
  CHECK(cfg.freeze_schedule[1].frozen.empty());
  bool checked = false;
  TrainHooks<float> hooks;
  hooks.on_phase_end = [&](std::size_t phase, const Model<float>& now) {
    if (phase != 0) return;
    checked = true;
    CHECK(same_params(now.section("enc1"), before.section("enc1")));
    CHECK(same_params(now.section("enc2"), before.section("enc2")));
    CHECK_FALSE(same_params(now.section("enc3"), before.section("enc3")));
    CHECK_FALSE(now.section("enc1").blocks[0].bn->running_mean == before.section("enc1").blocks[0].bn->running_mean);
  };
  cfg.val_fraction = 0.0;
  Model<float> last = m;
  train(m, data, cfg, &hooks, &last);
  CHECK(checked);
  CHECK_FALSE(same_params(last.section("enc1"), before.section("enc1")));
}

TEST_CASE("munet default schedule") {
  ArchSpec s;
  s.kind = ArchKind::munet;
  s.channels = 3;
  const auto sched = default_freeze_schedule(s, 2, 3, 4);
  REQUIRE(sched.size() == 3);
  CHECK(sched[0].frozen == std::vector<std::string>{"enc1", "enc2", "enc3", "enc4"});
  CHECK(sched[1].frozen == std::vector<std::string>{"enc1", "enc2"});
  CHECK(sched[2].frozen.empty());
  CHECK(sched[2].epochs == 4);
}

TEST_CASE("empty schedule is plain training") {
  const auto data = make_pretraining_set(8, 64, 12);
  auto a = Model<float>::build(tiny(), 4);
  auto b = a;
  auto with = quick(2);
  with.freeze_schedule = {{{}, 2}};
  train(a, data, with);
  train(b, data, quick(2));
  CHECK(same_weights(a, b));
}

TEST_CASE("training errors") {
  auto m = Model<float>::build(tiny(), 1);
  Dataset empty;
  CHECK_THROWS_AS(train(m, empty, quick(1)), DataError);
  auto data = make_pretraining_set(4, 64, 13);
  auto cfg = quick(1);
  cfg.freeze_schedule = {{{"enc7"}, 1}};
  CHECK_THROWS_AS(train(m, data, cfg), SpecError);
  auto huge = quick(3);
  huge.base_lr = 1e38;
  CHECK_THROWS_AS(train(m, data, huge), NumericError);
  data.samples[1].values[5] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(train(m, data, quick(1)), DataError);
  const auto wrong = make_pretraining_set(4, 128, 13);
  CHECK_THROWS_AS(train(m, wrong, quick(1)), DataError);
}

TEST_CASE("config json round trip") {
  TrainConfig c;
  c.base_lr = 2.5e-3;
  c.precision = Precision::f64;
  c.section_lr_multipliers = {0.1, 0.2};
  c.freeze_schedule = {{{"enc1"}, 3}, {{}, 2}};
  CHECK(train_config_from_json(train_config_to_json(c)) == c);
  CHECK(c.total_epochs() == 5);
}

TEST_CASE("history csv") {
  const auto path = std::filesystem::temp_directory_path() / "tsseg_history.csv";
  write_history_csv({{1, 0, 0.5, 0.4, 0.3}, {2, 0, 0.25, 0.2, 0.6}}, path);
  std::ifstream is(path);
  std::string header, row;
  std::getline(is, header);
  std::getline(is, row);
  CHECK(header == "epoch,train_loss,val_loss,val_iou");
  CHECK(row == "1,0.5,0.4,0.3");
  std::filesystem::remove(path);
}
