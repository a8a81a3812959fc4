#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "tracelab/tracelab.hpp"

using namespace tracelab;
using Catch::Approx;

namespace {

ExperimentConfig parse(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

std::string csv_of(const ResultTable& t) {
  std::ostringstream os;
  write_table_csv(os, t);
  return os.str();
}

ExperimentConfig small_estimation() {
  return parse(
      "mode = estimation\n"
      "design = gaussian\n"
      "d1 = 4\nd2 = 4\nn = 40\n"
      "ranks = 1, 2\n"
      "snr_grid = 0.5, 4\n"
      "reps = 6\n"
      "estimators = LS, AM, AM-1, NN\n"
      "nn_lambda_grid_size = 5\n"
      "master_seed = 17\n");
}

}  // namespace

TEST_CASE("config parsing") {
  SECTION("defaults") {
    const auto c = parse("");
    CHECK(c.mode == ExperimentMode::estimation);
    CHECK(c.n == 200);
    CHECK(c.reps == 100);
    CHECK(c.n_perms == 19);
    CHECK(c.alpha == 0.05);
    CHECK(c.design.d1 == 20);
  }
  SECTION("values, lists and comments") {
    const auto c = parse("# comment\nmode = inference\n  n = 50 \nsnr_grid = 0, 0.5,1\nestimators = FT, AM-2, NN-OS\n");
    CHECK(c.mode == ExperimentMode::inference);
    CHECK(c.n == 50);
    CHECK(c.snr_grid == std::vector<double>{0.0, 0.5, 1.0});
    REQUIRE(c.estimators.size() == 3);
    CHECK(c.estimators[1].kind == EstimatorKind::am_fixed);
    CHECK(c.estimators[1].param == 2);
    CHECK(c.estimators[2].kind == EstimatorKind::nn_os);
  }
  SECTION("sparse designs take p") {
    const auto c = parse("design = sparse_linear\np = 12\n");
    CHECK(c.design.d1 == 12);
    CHECK(c.design.d2 == 1);
    CHECK_THROWS_AS(parse("p = 12\n"), ConfigError);
  }
  SECTION("errors") {
    CHECK_THROWS_AS(parse("nsamples = 3\n"), ConfigError);
    CHECK_THROWS_AS(parse("n = 3\nn = 4\n"), ConfigError);
    CHECK_THROWS_AS(parse("n\n"), ConfigError);
    CHECK_THROWS_AS(parse("n = many\n"), ConfigError);
    CHECK_THROWS_AS(parse("mode = simulate\n"), ConfigError);
    CHECK_THROWS_AS(parse("estimators = OLS\n"), ConfigError);
    CHECK_THROWS_AS(parse("estimators = AM-0\n"), ConfigError);
    CHECK_THROWS_AS(parse("design = grid\n"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/file.cfg"), ConfigError);
  }
  SECTION("validation") {
    CHECK_THROWS_AS(validate(parse("reps = 0\n")), ConfigError);
    CHECK_THROWS_AS(validate(parse("alpha = 1\n")), ConfigError);
    CHECK_THROWS_AS(validate(parse("ranks = 21\n")), ConfigError);
    CHECK_THROWS_AS(validate(parse("snr_grid = -1\n")), ConfigError);
    CHECK_THROWS_AS(validate(parse("cv_folds = 1\n")), ConfigError);
    CHECK_THROWS_AS(validate(parse("design = matrix_completion\nd1 = 3\nd2 = 3\nn = 10\n")), ConfigError);
    CHECK_NOTHROW(validate(parse("ranks = 0, 20\n")));
  }
  SECTION("hash") {
    const auto a = parse("n = 50\nreps = 3\n");
    const auto b = parse("reps = 3\n# reordered\nn=50\n");
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a).size() == 16);
    CHECK(config_hash(a) != config_hash(parse("n = 51\nreps = 3\n")));
    // the worker count never changes results, so it is not hashed
    CHECK(config_hash(a) == config_hash(parse("n = 50\nreps = 3\nworkers = 4\n")));
    // resolved text parses back to the same settings
    CHECK(config_hash(parse(resolved_text(a))) == config_hash(a));
  }
}

TEST_CASE("CSV helpers") {
  CHECK(csv_field("plain") == "plain");
  CHECK(csv_field("a,b") == "\"a,b\"");
  CHECK(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
  std::istringstream is("a,\"b,c\",\"d\"\"e\"\n\"multi\nline\",x,\n");
  const auto rows = parse_csv(is);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0] == std::vector<std::string>{"a", "b,c", "d\"e"});
  CHECK(rows[1] == std::vector<std::string>{"multi\nline", "x", ""});
  std::istringstream bad("a,\"open\n");
  CHECK_THROWS_AS(parse_csv(bad), FormatError);
}

TEST_CASE("result table round trip and layout") {
  ResultTable t;
  t.mode = ExperimentMode::inference;
  t.ranks = {1, 2};
  t.estimators = {"FT", "NN-OR"};
  t.snrs = {0.0, 0.5};
  t.config_hash = "00000000deadbeef";
  for (Index r : t.ranks)
    for (const auto& e : t.estimators)
      for (double s : t.snrs) {
        ResultCell c{r, e, s, 0.05 * r + s, 20, 0, e == "NN-OR" ? "lambda=0.3" : "", {}};
        if (r == 2 && e == "FT" && s == 0.5) {
          c.value = std::numeric_limits<double>::quiet_NaN();
          c.reps = 0;
          c.failures = 20;
        }
        t.cells.push_back(c);
      }
  std::istringstream is(csv_of(t));
  const auto back = read_table_csv(is);
  CHECK(same_table(t, back));
  CHECK(back.at(1, "NN-OR", 0.5).tuning == "lambda=0.3");

  std::ostringstream md;
  write_table_md(md, t);
  std::istringstream lines(md.str());
  std::string line;
  std::getline(lines, line);
  CHECK(line == "| r* | Test | 0 | 0.5 |");
  std::getline(lines, line);
  CHECK(line == "|---|---|---|---|");
  std::getline(lines, line);
  CHECK(line == "| 1 | FT | 0.05 | 0.55 |");
  std::getline(lines, line);
  CHECK(line == "|  | NN-OR | 0.05 | 0.55 |");
  std::getline(lines, line);
  CHECK(line == "| 2 | FT | 0.10 | NA (20 failed) |");

  std::istringstream wrong("mode,r_star\n");
  CHECK_THROWS_AS(read_table_csv(wrong), FormatError);
  CHECK_THROWS_AS(load_table_csv("/nonexistent/table.csv"), IoError);
}

TEST_CASE("outputs on disk") {
  const auto dir = std::filesystem::temp_directory_path() / "tracelab_unit_outputs";
  std::filesystem::remove_all(dir);
  auto c = small_estimation();
  c.reps = 2;
  c.ranks = {1};
  const auto t = run_estimation_experiment(c, 1);
  emit_outputs(t, dir, resolved_text(c));
  for (const char* f : {"table.csv", "table.md", "table.svg", "raw.csv", "config.resolved"})
    CHECK(std::filesystem::exists(dir / f));
  CHECK(same_table(load_table_csv((dir / "table.csv").string()), t));
  std::ifstream raw(dir / "raw.csv");
  std::string header;
  std::getline(raw, header);
  CHECK(header == "r_star,estimator,snr,rep,value");
  std::filesystem::remove_all(dir);
}

TEST_CASE("cross-validation") {
  const DesignKind k{DesignVariant::gaussian, 4, 4};
  SECTION("single lambda grid") {
    const auto d = gen_dataset(k, SignalSpec{1, 1.0, 1}, 30, 1.0, 2);
    CHECK(cross_validate_lambda(d, 5, {0.4}) == 0.4);
    CHECK_THROWS_AS(cross_validate_lambda(d, 1, {0.4}), ConfigError);
  }
  SECTION("fold assignment") {
    const auto f = assign_folds(23, 5, 3);
    std::vector<int> sizes(5, 0);
    for (Index v : f) ++sizes[static_cast<std::size_t>(v)];
    for (int s : sizes) CHECK((s == 4 || s == 5));
    CHECK(f == assign_folds(23, 5, 3));
  }
  SECTION("too few observations") {
    const auto d = gen_dataset(k, SignalSpec{1, 1.0, 1}, 4, 1.0, 2);
    CHECK_THROWS_AS(cross_validate(d, 5, {0.1, 1.0}), ConfigError);
    const auto e = gen_dataset(k, SignalSpec{1, 1.0, 1}, 3, 1.0, 2);
    CHECK_THROWS_AS(cross_validate(e, 2, {0.1, 1.0}), ConfigError);
  }
  SECTION("pure noise prefers the largest lambda") {
    int large = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
      const auto d = gen_dataset(k, SignalSpec{1, 0.0, s}, 40, 1.0, 100 + s);
      const auto cv = cross_validate(d, 5, {0.001, 0.01, 0.1, 10.0}, s);
      large += cv.lambda() == 10.0;
    }
    CHECK(large >= 16);
  }
  SECTION("noiseless signal prefers the smallest lambda") {
    int small = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
      const auto d = gen_dataset(k, SignalSpec{1, 4.0, s}, 40, 0.0, 100 + s);
      const auto cv = cross_validate(d, 5, {0.001, 0.01, 0.1, 10.0}, s);
      small += cv.lambda() == 0.001;
    }
    CHECK(small >= 16);
  }
  SECTION("out-of-fold predictions come from fits without the fold") {
    const auto d = gen_dataset(k, SignalSpec{1, 2.0, 5}, 30, 1.0, 6);
    const std::vector<double> grid{0.05, 0.5};
    const auto cv = cross_validate(d, 3, grid, 9);
    for (Index fold = 0; fold < 3; ++fold) {
      std::vector<Index> train, test;
      for (Index i = 0; i < 30; ++i) (cv.fold_of[static_cast<std::size_t>(i)] == fold ? test : train).push_back(i);
      NnConfig cfg;
      cfg.lambda = 0.5;
      const auto fit = fit_nn(d.subset(train), cfg);
      for (Index i : test)
        CHECK(cv.oof_predictions(i, 1) == Approx(d.predict(fit.estimate.values())[i]).margin(1e-4));
    }
  }
  SECTION("ties go to the larger lambda") {
    CvResult r;
    r.lambdas = {0.1, 0.5, 0.3};
    VectorXd err(3);
    err << 2.0, 1.0, 1.0;
    CHECK(r.pick(err) == 1);
  }
}

TEST_CASE("F-test") {
  SECTION("closed form with two and two degrees of freedom") {
    MatrixXd x(4, 2);
    x << 1, 0, 0, 1, 1, 1, 2, -1;
    VectorXd y(4);
    y << 1.0, -0.5, 2.0, 0.3;
    const auto f = f_test(x, y);
    CHECK(f.df1 == 2);
    CHECK(f.df2 == 2);
    CHECK(f.p_value == Approx(1.0 / (1.0 + f.statistic)).epsilon(1e-10));
  }
  SECTION("perfect fit") {
    MatrixXd x = MatrixXd::Identity(3, 2);
    VectorXd y(3);
    y << 1.0, 2.0, 0.0;
    CHECK(f_test(x, y).p_value == 0.0);
  }
  SECTION("rank conditions") {
    CHECK_THROWS_AS(f_test(MatrixXd::Identity(2, 2), VectorXd::Ones(2)), PreconditionError);
    CHECK_THROWS_AS(f_test(MatrixXd::Zero(3, 1), VectorXd::Ones(3)), PreconditionError);
    CHECK_THROWS_AS(f_test(MatrixXd::Zero(3, 1), VectorXd::Ones(4)), DimensionError);
  }
}

TEST_CASE("null screen ceiling") {
  CHECK(detail::screen_ceiling(100, 0.05) == 9);
  CHECK(detail::screen_ceiling(200, 0.05) == 16);
}

TEST_CASE("estimation harness") {
  const auto c = small_estimation();
  const auto a = run_estimation_experiment(c, 1);
  const auto b = run_estimation_experiment(c, 3);
  CHECK(csv_of(a) == csv_of(b));
  REQUIRE(a.cells.size() == 2 * 4 * 2);
  for (const auto& cell : a.cells) {
    CHECK(cell.valid());
    CHECK(cell.reps == 6);
    CHECK(cell.value >= 0.0);
    CHECK(cell.raw.size() == 6);
  }
  // no rank grid: AM uses r = r* and has nothing to tune
  CHECK(a.at(2, "AM", 4.0).tuning.empty());
  CHECK(a.at(1, "NN", 4.0).tuning.rfind("lambda/lambda_max=", 0) == 0);
  // with r* = 1 the rank-one fit is the tuned fit
  CHECK(a.at(1, "AM", 4.0).value == a.at(1, "AM-1", 4.0).value);
  CHECK(a.at(1, "LS", 4.0).value < a.at(1, "NN", 4.0).value + 1.0);

  auto inference_only = c;
  inference_only.estimators = {parse_estimator("FT")};
  CHECK_THROWS_AS(run_estimation_experiment(inference_only, 1), ConfigError);
  auto wrong_mode = c;
  wrong_mode.mode = ExperimentMode::inference;
  CHECK_THROWS_AS(run_estimation_experiment(wrong_mode, 1), ConfigError);
}

TEST_CASE("inference harness") {
  const auto c = parse(
      "mode = inference\n"
      "design = gaussian\n"
      "d1 = 4\nd2 = 4\nn = 30\n"
      "ranks = 1\n"
      "snr_grid = 0, 3\n"
      "reps = 3\n"
      "n_perms = 9\n"
      "estimators = FT, LS, AM, AM-2, NN-OR, NN-DS, NN-IS, NN-OS\n"
      "inference_lambda_grid = 0.2, 0.6\n"
      "cv_folds = 3\n"
      "master_seed = 5\n");
  const auto a = run_inference_experiment(c, 1);
  const auto b = run_inference_experiment(c, 2);
  CHECK(csv_of(a) == csv_of(b));
  for (const auto& cell : a.cells) {
    CHECK(cell.valid());
    CHECK(cell.value >= 0.0);
    CHECK(cell.value <= 1.0);
    for (double v : cell.raw) CHECK((v == 0.0 || v == 1.0));
  }
  CHECK(a.at(1, "NN-OR", 3.0).tuning.rfind("lambda=", 0) == 0);
  CHECK(a.at(1, "FT", 3.0).value == 1.0);

  auto sparse_test = c;
  sparse_test.estimators = {parse_estimator("lasso")};
  CHECK_THROWS_AS(run_inference_experiment(sparse_test, 1), ConfigError);
  auto null_rank = c;
  null_rank.ranks = {0};
  CHECK_THROWS_AS(run_inference_experiment(null_rank, 1), ConfigError);
}

TEST_CASE("sparse harness") {
  const auto est = parse(
      "mode = estimation\ndesign = sparse_linear\np = 6\nn = 30\nranks = 1, 2\nsnr_grid = 1\nreps = 4\n"
      "estimators = LS, lasso, L0\n");
  const auto t = run_estimation_experiment(est, 1);
  for (const auto& cell : t.cells) CHECK(cell.valid());
  CHECK(t.at(2, "L0", 1.0).tuning.rfind("s=", 0) == 0);
  const auto inf = parse(
      "mode = inference\ndesign = sparse_linear\np = 6\nn = 30\nranks = 1\nsnr_grid = 0, 2\nreps = 3\nn_perms = 9\n"
      "estimators = FT, LS, lasso, L0-1\n");
  const auto r = run_inference_experiment(inf, 1);
  for (const auto& cell : r.cells) CHECK(cell.valid());
  auto matrix_only = est;
  matrix_only.estimators = {parse_estimator("NN")};
  CHECK_THROWS_AS(run_estimation_experiment(matrix_only, 1), ConfigError);
}
