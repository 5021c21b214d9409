#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "ath/data.hpp"
#include "ath/model.hpp"

using namespace ath;

TEST_CASE("kernel features evaluate the Gaussian map", "[model]") {
  KernelMap kernel;
  kernel.anchors.resize(2, 2);
  kernel.anchors << 0, 3, 0, 4;  // anchors (0,0) and (3,4)
  kernel.sigma = 25.0;

  Vector x(2);
  x << 0, 0;
  const Vector phi = kernel_features(kernel, x);
  CHECK(phi(0) == 1.0);  // exact: x coincides with anchor 0
  CHECK(phi(1) == Catch::Approx(std::exp(-1.0)).epsilon(1e-12));  // ||x-a||^2 = sigma

  // large sigma pushes every component toward 1
  kernel.sigma = 1e12;
  const Vector flat = kernel_features(kernel, x);
  CHECK(flat(0) == Catch::Approx(1.0).margin(1e-9));
  CHECK(flat(1) == Catch::Approx(1.0).margin(1e-9));

  Vector wrong(3);
  REQUIRE_THROWS_AS(kernel_features(kernel, wrong), ValidationError);
}

TEST_CASE("kernel features are bounded and monotone in distance", "[model]") {
  Rng rng(5);
  KernelMap kernel;
  kernel.anchors = rng.normal_matrix(4, 1);
  kernel.sigma = 2.0;
  double prev = 1.0;
  for (int step = 0; step < 8; ++step) {
    Vector x = kernel.anchors.col(0);
    x(0) += 0.5 * step;
    const double v = kernel_features(kernel, x)(0);
    CHECK(v > 0.0);
    CHECK(v <= 1.0);
    CHECK(v <= prev);
    prev = v;
  }
}

TEST_CASE("map_real applies the projection columnwise", "[model]") {
  HashFunction fn;
  fn.projection = Matrix::Identity(3, 3);
  fn.input_dim = 3;
  Rng rng(2);
  const Matrix x = rng.normal_matrix(3, 4);
  CHECK(map_real(fn, x) == x);

  HashFunction single;
  single.projection.resize(2, 1);
  single.projection << 1, -1;
  single.input_dim = 2;
  Matrix v(2, 1);
  v << 3, 1;
  CHECK(map_real(single, v)(0, 0) == 2.0);

  single.projection.setZero();
  CHECK(map_real(single, v).isZero(0.0));

  Matrix bad(3, 1);
  REQUIRE_THROWS_AS(map_real(single, bad), ValidationError);
}

TEST_CASE("map_real is linear in the projection", "[model]") {
  Rng rng(6);
  const Matrix x = rng.normal_matrix(4, 6);
  HashFunction a, b, sum;
  a.projection = rng.normal_matrix(4, 3);
  b.projection = rng.normal_matrix(4, 3);
  sum.projection = a.projection + b.projection;
  a.input_dim = b.input_dim = sum.input_dim = 4;
  CHECK((map_real(a, x) + map_real(b, x) - map_real(sum, x)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("encode takes signs with sign(0) = +1", "[model]") {
  HashFunction fn;
  fn.projection = Matrix::Identity(2, 2);
  fn.input_dim = 2;
  Matrix x(2, 2);
  x << 0.5, -0.2, -3.0, 4.0;
  const BinaryCodes codes = encode(fn, x);
  Matrix expected(2, 2);
  expected << 1, -1, -1, 1;
  CHECK(codes.codes == expected);

  Matrix zero(2, 1);
  zero << 0.0, -0.0;
  CHECK(encode(fn, zero).codes == Matrix::Ones(2, 1));

  Rng rng(3);
  const Matrix any = rng.normal_matrix(2, 20);
  const Matrix c = encode(fn, any).codes;
  CHECK(((c.array() == 1.0) || (c.array() == -1.0)).all());
}

TEST_CASE("pca projection finds the dominant axis", "[model]") {
  Rng rng(4);
  Matrix x(2, 200);
  for (Index j = 0; j < 200; ++j) {
    x(0, j) = 10.0 * rng.normal();
    x(1, j) = 0.1 * rng.normal();
  }
  const Matrix a = pca_projection(x, 1);
  CHECK(std::abs(a(0, 0)) == Catch::Approx(1.0).margin(1e-3));
  CHECK(a(0, 0) > 0.0);  // sign convention
}

TEST_CASE("pca projections are orthonormal up to the rank", "[model]") {
  Rng rng(9);
  const Matrix x = rng.normal_matrix(6, 40);
  const Matrix a = pca_projection(x, 6);
  CHECK((a.transpose() * a - Matrix::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-8);

  // r beyond the input dimension: trailing columns start at zero
  const Matrix padded = pca_projection(x, 8);
  CHECK(padded.cols() == 8);
  CHECK(padded.col(6).isZero(0.0));
  CHECK(padded.col(7).isZero(0.0));
  CHECK((padded.leftCols(6).transpose() * padded.leftCols(6) - Matrix::Identity(6, 6))
            .cwiseAbs()
            .maxCoeff() < 1e-8);
}

TEST_CASE("balance repair hits the row-sum convention", "[model]") {
  Rng rng(3);
  for (Index n : {6, 7}) {
    const Matrix mapped = rng.normal_matrix(4, n).array() + 0.8;  // biased toward +
    BinaryCodes codes;
    codes.codes = mapped.unaryExpr([](double v) { return sign_bit(v); });
    balance_codes(codes, mapped);
    for (Index i = 0; i < 4; ++i)
      CHECK(codes.codes.row(i).sum() == (n % 2 == 0 ? 0.0 : -1.0));
  }
}

TEST_CASE("init_model is deterministic and PCA-based", "[model]") {
  SynthSpec spec;
  spec.c = 3;
  spec.n_s = 30;
  spec.n_t = 24;
  spec.d_latent = 3;
  spec.d_s = 8;
  spec.d_t = 5;
  spec.noise_sigma = 0.2;
  spec.seed = 5;
  const GitrTask task = generate_synthetic_gitr(spec);

  const InitResult a = init_model(task, 4, Variant::U, {}, 17);
  const InitResult b = init_model(task, 4, Variant::U, {}, 17);
  REQUIRE(a.model.source_fn.projection == b.model.source_fn.projection);
  REQUIRE(a.codes_s.codes == b.codes_s.codes);
  CHECK(a.model.source_fn.input_dim == 8);
  CHECK(a.model.target_fn.input_dim == 5);
  CHECK(a.codes_s.is_balanced());
  CHECK(a.codes_t.is_balanced());

  // kernel variant: anchors fixed by seed, PCA runs on kernel features
  KernelSpec kspec{10, 8, 0.0};
  const InitResult k1 = init_model(task, 4, Variant::K, kspec, 23);
  const InitResult k2 = init_model(task, 4, Variant::K, kspec, 23);
  REQUIRE(k1.model.source_fn.kernel->anchors == k2.model.source_fn.kernel->anchors);
  CHECK(k1.model.source_fn.kernel->sigma == k2.model.source_fn.kernel->sigma);
  CHECK(k1.model.source_fn.projection.rows() == 10);
  CHECK(k1.model.target_fn.projection.rows() == 8);
  CHECK(k1.model.source_fn.kernel->sigma > 0.0);
}

TEST_CASE("model files round-trip bit-exactly", "[model]") {
  SynthSpec spec;
  spec.c = 2;
  spec.n_s = 16;
  spec.n_t = 12;
  spec.d_latent = 2;
  spec.d_s = 6;
  spec.d_t = 4;
  spec.noise_sigma = 0.1;
  spec.seed = 2;
  const GitrTask task = generate_synthetic_gitr(spec);
  const auto path =
      (std::filesystem::temp_directory_path() / "ath_model_roundtrip.athf").string();

  for (Variant v : {Variant::U, Variant::K}) {
    const InitResult init =
        init_model(task, 3, v, KernelSpec{8, 6, 0.5}, 7);
    save_model(path, init.model);
    const HashModel back = load_model(path);
    REQUIRE(back.code_length == 3);
    CHECK(back.variant == v);
    REQUIRE(back.source_fn.projection == init.model.source_fn.projection);
    REQUIRE(back.target_fn.projection == init.model.target_fn.projection);
    CHECK(back.source_fn.input_dim == init.model.source_fn.input_dim);
    if (v == Variant::K) {
      REQUIRE(back.source_fn.kernel.has_value());
      CHECK(back.source_fn.kernel->anchors == init.model.source_fn.kernel->anchors);
      CHECK(back.source_fn.kernel->sigma == init.model.source_fn.kernel->sigma);
    }
  }

  // corrupted magic is reported with the file name
  {
    std::ofstream out(path, std::ios::binary);
    out.write("XXXX", 4);
  }
  REQUIRE_THROWS_WITH(load_model(path), Catch::Matchers::ContainsSubstring("magic") &&
                                            Catch::Matchers::ContainsSubstring("ath_model_roundtrip"));
}
