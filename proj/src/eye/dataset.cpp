#include "gzk/dataset.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "gzk/random.hpp"

namespace gzk::eye {

namespace {

constexpr int kMaxDraws = 100;
constexpr std::uint64_t kSubjectStream = 0x5b1ec7ull;
constexpr std::uint64_t kRenderStream = 1;

template <typename T>
void put(std::vector<char>& buf, T v) {
  static_assert(std::endian::native == std::endian::little, "dataset records are little-endian");
  const auto at = buf.size();
  buf.resize(at + sizeof(T));
  std::memcpy(buf.data() + at, &v, sizeof(T));
}

template <typename T>
T get(const char*& p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  p += sizeof(T);
  return v;
}

std::size_t record_bytes(Dims dims) {
  return sizeof(float) * (static_cast<std::size_t>(dims.height) * static_cast<std::size_t>(dims.width) +
                          2 * kNumLandmarks + 2 + 3) +
         sizeof(std::int32_t) + sizeof(std::int64_t);
}

}  // namespace

void SamplingRanges::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("invalid sampling range: ") + what);
  };
  require(pitch_max >= 0.0 && pitch_max <= 1.5207963267948966, "pitch_max must lie in [0, pi/2 - 0.05]");
  require(yaw_max >= 0.0 && yaw_max <= 1.5207963267948966, "yaw_max must lie in [0, pi/2 - 0.05]");
  require(radius_min > 0.0 && radius_max >= radius_min, "need 0 < radius_min <= radius_max");
  require(center_jitter >= 0.0, "center_jitter must be non-negative");
  require(openness_min > 0.0 && openness_max >= openness_min, "need 0 < openness_min <= openness_max");
  require(brightness_jitter >= 0.0 && brightness_jitter < 1.0, "brightness_jitter must lie in [0, 1)");
  require(noise_sigma >= 0.0, "noise_sigma must be non-negative");
  require(n_subjects >= 1, "n_subjects must be positive");
}

float to_stored(double v) { return static_cast<float>(v); }

Appearance subject_appearance(std::uint64_t dataset_seed, int subject, const SamplingRanges& ranges) {
  Rng rng(mix_seed(mix_seed(dataset_seed, kSubjectStream), static_cast<std::uint64_t>(subject)));
  Appearance look;
  look.openness = rng.uniform(ranges.openness_min, ranges.openness_max);
  look.skin = rng.uniform(0.5, 0.7);
  look.sclera = rng.uniform(0.8, 0.95);
  look.iris = rng.uniform(0.25, 0.5);
  look.pupil = rng.uniform(0.03, 0.12);
  look.noise_sigma = ranges.noise_sigma;
  return look;
}

SampleDraw draw_sample(std::uint64_t dataset_seed, std::int64_t index, const SamplingRanges& ranges, Dims dims,
                       int* rejections) {
  const std::uint64_t sample_seed = mix_seed(dataset_seed, static_cast<std::uint64_t>(index));
  const int subject = static_cast<int>(index % ranges.n_subjects);
  const Appearance base = subject_appearance(dataset_seed, subject, ranges);
  Rng rng(sample_seed);
  for (int draw = 0; draw < kMaxDraws; ++draw) {
    SampleDraw d;
    d.subject = subject;
    d.seed = sample_seed;
    EyeParams& params = d.params;
    params.gaze = {rng.uniform(-ranges.pitch_max, ranges.pitch_max), rng.uniform(-ranges.yaw_max, ranges.yaw_max)};
    params.eyeball = {dims.width / 2.0 + rng.uniform(-ranges.center_jitter, ranges.center_jitter),
                      dims.height / 2.0 + rng.uniform(-ranges.center_jitter, ranges.center_jitter),
                      rng.uniform(ranges.radius_min, ranges.radius_max)};
    params.look = base;
    params.look.openness *= rng.uniform(0.95, 1.05);
    params.look.brightness = 1.0 + rng.uniform(-ranges.brightness_jitter, ranges.brightness_jitter);
    d.landmarks = synth_landmarks(params.gaze, params.eyeball, params.look.openness);
    if (landmarks_in_bounds(d.landmarks, dims)) return d;
    if (rejections) ++*rejections;
  }
  throw std::runtime_error("draw_sample: no in-bounds draw after " + std::to_string(kMaxDraws) +
                           " attempts; sampling ranges too wide for the image");
}

EyeSample generate_sample(std::uint64_t dataset_seed, std::int64_t index, const SamplingRanges& ranges, Dims dims,
                          int* rejections) {
  const SampleDraw d = draw_sample(dataset_seed, index, ranges, dims, rejections);
  EyeSample s;
  s.image = render_eye(d.params, dims, mix_seed(d.seed, kRenderStream));
  for (std::size_t i = 0; i < kNumLandmarks; ++i)
    s.landmarks[i] = {to_stored(d.landmarks[i].u), to_stored(d.landmarks[i].v)};
  s.gaze = {to_stored(d.params.gaze.pitch), to_stored(d.params.gaze.yaw)};
  s.eyeball = {to_stored(d.params.eyeball.center_u), to_stored(d.params.eyeball.center_v),
               to_stored(d.params.eyeball.radius)};
  s.subject_id = d.subject;
  s.seed = std::bit_cast<std::int64_t>(d.seed);
  return s;
}

Dataset generate_dataset(std::int64_t n, std::uint64_t seed, const SamplingRanges& ranges, Dims dims, double sigma) {
  if (n < 1) throw std::invalid_argument("generate_dataset: n must be at least 1");
  if (dims.height < 8 || dims.width < 8 || dims.height % 8 != 0 || dims.width % 8 != 0)
    throw std::invalid_argument("generate_dataset: image dims must be positive multiples of 8");
  if (!(sigma > 0.0)) throw std::invalid_argument("generate_dataset: sigma must be positive");
  ranges.validate();
  Dataset out;
  out.meta.dims = dims;
  out.meta.sigma = sigma;
  out.meta.count = n;
  out.meta.seed = seed;
  out.meta.ranges = ranges;
  out.samples.resize(static_cast<std::size_t>(n));
  std::vector<int> rejected(static_cast<std::size_t>(n), 0);
#pragma omp parallel for schedule(dynamic, 8)
  for (std::int64_t i = 0; i < n; ++i) {
    out.samples[static_cast<std::size_t>(i)] =
        generate_sample(seed, i, ranges, dims, &rejected[static_cast<std::size_t>(i)]);
  }
  for (int r : rejected) out.meta.rejections += r;
  return out;
}

nlohmann::json to_json(const SamplingRanges& r) {
  return {{"pitch_max", r.pitch_max},         {"yaw_max", r.yaw_max},
          {"radius_min", r.radius_min},       {"radius_max", r.radius_max},
          {"center_jitter", r.center_jitter}, {"openness_min", r.openness_min},
          {"openness_max", r.openness_max},   {"brightness_jitter", r.brightness_jitter},
          {"noise_sigma", r.noise_sigma},     {"n_subjects", r.n_subjects}};
}

SamplingRanges ranges_from_json(const nlohmann::json& j) {
  SamplingRanges r;
  r.pitch_max = j.value("pitch_max", r.pitch_max);
  r.yaw_max = j.value("yaw_max", r.yaw_max);
  r.radius_min = j.value("radius_min", r.radius_min);
  r.radius_max = j.value("radius_max", r.radius_max);
  r.center_jitter = j.value("center_jitter", r.center_jitter);
  r.openness_min = j.value("openness_min", r.openness_min);
  r.openness_max = j.value("openness_max", r.openness_max);
  r.brightness_jitter = j.value("brightness_jitter", r.brightness_jitter);
  r.noise_sigma = j.value("noise_sigma", r.noise_sigma);
  r.n_subjects = j.value("n_subjects", r.n_subjects);
  r.validate();
  return r;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  const Dims dims = dataset.meta.dims;
  const std::size_t pixels = static_cast<std::size_t>(dims.height) * static_cast<std::size_t>(dims.width);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create dataset directory " + dir.string() + ": " + ec.message());

  const nlohmann::json meta = {{"format_version", dataset.meta.format_version},
                               {"height", dims.height},
                               {"width", dims.width},
                               {"sigma", dataset.meta.sigma},
                               {"count", dataset.samples.size()},
                               {"seed", dataset.meta.seed},
                               {"rejections", dataset.meta.rejections},
                               {"record_bytes", record_bytes(dims)},
                               {"ranges", to_json(dataset.meta.ranges)}};
  std::ofstream mf(dir / "meta.json");
  if (!mf) throw std::runtime_error("cannot write " + (dir / "meta.json").string());
  mf << meta.dump(2) << '\n';

  std::ofstream bf(dir / "samples.bin", std::ios::binary | std::ios::trunc);
  if (!bf) throw std::runtime_error("cannot write " + (dir / "samples.bin").string());
  std::vector<char> buf;
  buf.reserve(record_bytes(dims));
  for (const EyeSample& s : dataset.samples) {
    if (s.image.size() != pixels) throw std::invalid_argument("write_dataset: image size does not match dims");
    buf.clear();
    for (float v : s.image) put(buf, v);
    for (const Point& p : s.landmarks) {
      put(buf, to_stored(p.u));
      put(buf, to_stored(p.v));
    }
    put(buf, to_stored(s.gaze.pitch));
    put(buf, to_stored(s.gaze.yaw));
    put(buf, to_stored(s.eyeball.center_u));
    put(buf, to_stored(s.eyeball.center_v));
    put(buf, to_stored(s.eyeball.radius));
    put(buf, s.subject_id);
    put(buf, s.seed);
    bf.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  }
  if (!bf) throw std::runtime_error("failed writing " + (dir / "samples.bin").string());
}

Dataset read_dataset(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "meta.json");
  if (!mf) throw std::runtime_error("cannot open " + (dir / "meta.json").string());
  const nlohmann::json meta = nlohmann::json::parse(mf);
  Dataset out;
  out.meta.format_version = meta.at("format_version").get<int>();
  if (out.meta.format_version != 1)
    throw std::runtime_error("unsupported dataset format version " + std::to_string(out.meta.format_version));
  out.meta.dims = {meta.at("height").get<int>(), meta.at("width").get<int>()};
  out.meta.sigma = meta.at("sigma").get<double>();
  out.meta.count = meta.at("count").get<std::int64_t>();
  out.meta.seed = meta.at("seed").get<std::uint64_t>();
  out.meta.rejections = meta.value("rejections", std::int64_t{0});
  out.meta.ranges = ranges_from_json(meta.at("ranges"));

  const Dims dims = out.meta.dims;
  const std::size_t pixels = static_cast<std::size_t>(dims.height) * static_cast<std::size_t>(dims.width);
  const std::size_t rec = record_bytes(dims);
  std::ifstream bf(dir / "samples.bin", std::ios::binary);
  if (!bf) throw std::runtime_error("cannot open " + (dir / "samples.bin").string());
  const auto size = std::filesystem::file_size(dir / "samples.bin");
  if (size != rec * static_cast<std::uint64_t>(out.meta.count))
    throw std::runtime_error("samples.bin holds " + std::to_string(size) + " bytes; expected " +
                             std::to_string(out.meta.count) + " records of " + std::to_string(rec));
  std::vector<char> buf(rec);
  out.samples.resize(static_cast<std::size_t>(out.meta.count));
  for (EyeSample& s : out.samples) {
    bf.read(buf.data(), static_cast<std::streamsize>(rec));
    const char* p = buf.data();
    s.image.resize(pixels);
    for (float& v : s.image) v = get<float>(p);
    for (Point& pt : s.landmarks) {
      pt.u = get<float>(p);
      pt.v = get<float>(p);
    }
    s.gaze.pitch = get<float>(p);
    s.gaze.yaw = get<float>(p);
    s.eyeball.center_u = get<float>(p);
    s.eyeball.center_v = get<float>(p);
    s.eyeball.radius = get<float>(p);
    s.subject_id = get<std::int32_t>(p);
    s.seed = get<std::int64_t>(p);
  }
  return out;
}

Split split_of(std::int32_t subject_id) {
  const int bucket = ((subject_id % 10) + 10) % 10;
  return bucket < 8 ? Split::train : bucket == 8 ? Split::val : Split::test;
}

std::vector<std::size_t> split_indices(const Dataset& dataset, Split split) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < dataset.samples.size(); ++i)
    if (split_of(dataset.samples[i].subject_id) == split) out.push_back(i);
  return out;
}

}  // namespace gzk::eye
