#include "ecgid/resample.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "ecgid/parallel.hpp"

namespace ecgid {

namespace {

constexpr char kMagic[4] = {'S', 'I', 'G', '1'};

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = M_PI * x;
  return std::sin(px) / px;
}

/// Zero-padded convolution with the filter center aligned on the output
/// sample, so the result has the input's length and no group delay.
Eigen::VectorXd filter_channel(const Eigen::VectorXd& x,
                               const std::vector<double>& h) {
  const auto t_len = x.size();
  const auto center = static_cast<Eigen::Index>(h.size() / 2);
  Eigen::VectorXd y(t_len);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    double acc = 0.0;
    for (std::size_t k = 0; k < h.size(); ++k) {
      const Eigen::Index src = t + static_cast<Eigen::Index>(k) - center;
      if (src >= 0 && src < t_len) acc += h[k] * x[src];
    }
    y[t] = acc;
  }
  return y;
}

}  // namespace

FirSpec antialias_spec(double f_target) {
  FirSpec spec;
  spec.taps = 101;
  spec.cutoff_hz = 0.45 * f_target;
  return spec;
}

std::vector<double> design_fir(const FirSpec& spec, double f_source) {
  if (spec.taps < 3 || spec.taps % 2 == 0) {
    throw FilterSpecError("tap count must be odd and at least 3, got " +
                          std::to_string(spec.taps));
  }
  if (!(f_source > 0.0)) {
    throw FilterSpecError("source rate must be positive");
  }
  if (!(spec.cutoff_hz > 0.0) || spec.cutoff_hz >= 0.5 * f_source) {
    throw FilterSpecError("cutoff " + std::to_string(spec.cutoff_hz) +
                          " Hz must lie inside (0, " +
                          std::to_string(0.5 * f_source) + ") Hz");
  }

  const int m = spec.taps;
  const double center = 0.5 * (m - 1);
  const double fc = spec.cutoff_hz / f_source;  // cycles per sample
  std::vector<double> h(static_cast<std::size_t>(m));
  for (int n = 0; n < m; ++n) {
    const double ideal = 2.0 * fc * sinc(2.0 * fc * (n - center));
    const double window =
        0.54 - 0.46 * std::cos(2.0 * M_PI * n / static_cast<double>(m - 1));
    h[static_cast<std::size_t>(n)] = ideal * window;
  }
  double gain = 0.0;
  for (double v : h) gain += v;
  for (double& v : h) v /= gain;
  return h;
}

MultiLeadSignal decimate(const MultiLeadSignal& in, int factor, int threads) {
  if (factor < 1) {
    throw ResampleError("decimation factor must be >= 1, got " +
                        std::to_string(factor));
  }
  if (in.channels.size() == 0) throw ResampleError("empty signal");
  if (!(in.sample_rate > 0.0)) throw ResampleError("sample rate must be positive");

  const double f_target = in.sample_rate / factor;
  const std::vector<double> h =
      design_fir(antialias_spec(f_target), in.sample_rate);

  const Eigen::Index t_out =
      (in.channels.cols() + factor - 1) / static_cast<Eigen::Index>(factor);
  MultiLeadSignal out;
  out.sample_rate = f_target;
  out.channels.resize(in.channels.rows(), t_out);
  parallel_for(0, static_cast<std::size_t>(in.channels.rows()), threads,
               [&](std::size_t c) {
                 const auto row = static_cast<Eigen::Index>(c);
                 const Eigen::VectorXd filtered =
                     filter_channel(in.channels.row(row).transpose(), h);
                 for (Eigen::Index t = 0; t < t_out; ++t) {
                   out.channels(row, t) =
                       filtered[t * static_cast<Eigen::Index>(factor)];
                 }
               });
  return out;
}

MultiLeadSignal resample(const MultiLeadSignal& in, double f_target,
                         int threads) {
  if (!(f_target > 0.0)) throw ResampleError("target rate must be positive");
  const double ratio = in.sample_rate / f_target;
  const double rounded = std::round(ratio);
  if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9) {
    throw ResampleError("rate ratio " + std::to_string(in.sample_rate) + "/" +
                        std::to_string(f_target) +
                        " is not a positive integer");
  }
  return decimate(in, static_cast<int>(rounded), threads);
}

MultiLeadSignal zscore(const MultiLeadSignal& in,
                       const std::vector<double>& mu,
                       const std::vector<double>& sigma) {
  const auto c_len = static_cast<std::size_t>(in.channels.rows());
  if (mu.size() != c_len || sigma.size() != c_len) {
    throw DimensionError("per-channel statistics must match channel count " +
                         std::to_string(c_len));
  }
  for (std::size_t c = 0; c < c_len; ++c) {
    if (!(sigma[c] > 0.0)) {
      throw DegenerateChannel("channel " + std::to_string(c) +
                              " has non-positive sigma");
    }
  }
  MultiLeadSignal out;
  out.sample_rate = in.sample_rate;
  out.channels = in.channels;
  for (std::size_t c = 0; c < c_len; ++c) {
    const auto row = static_cast<Eigen::Index>(c);
    out.channels.row(row) =
        (in.channels.row(row).array() - mu[c]) / sigma[c];
  }
  return out;
}

void save_signal(const std::string& path, const MultiLeadSignal& signal) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  const auto write_u32 = [&out](std::uint32_t v) {
    unsigned char buf[4];
    for (int i = 0; i < 4; ++i) buf[i] = (v >> (8 * i)) & 0xff;
    out.write(reinterpret_cast<const char*>(buf), 4);
  };
  write_u32(static_cast<std::uint32_t>(signal.channels.rows()));
  write_u32(static_cast<std::uint32_t>(signal.channels.cols()));
  for (Eigen::Index c = 0; c < signal.channels.rows(); ++c) {
    for (Eigen::Index t = 0; t < signal.channels.cols(); ++t) {
      const float v = static_cast<float>(signal.channels(c, t));
      char buf[4];
      std::memcpy(buf, &v, 4);
      out.write(buf, 4);
    }
  }
  if (!out) throw IoError("failed writing: " + path);
}

MultiLeadSignal load_signal(const std::string& path, double sample_rate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw ParseError("not a signal container: " + path);
  }
  const auto read_u32 = [&in, &path]() {
    unsigned char buf[4];
    in.read(reinterpret_cast<char*>(buf), 4);
    if (!in) throw ParseError("truncated signal container: " + path);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(buf[i]) << (8 * i);
    return v;
  };
  const std::uint32_t c_len = read_u32();
  const std::uint32_t t_len = read_u32();
  MultiLeadSignal signal;
  signal.sample_rate = sample_rate;
  signal.channels.resize(c_len, t_len);
  for (std::uint32_t c = 0; c < c_len; ++c) {
    for (std::uint32_t t = 0; t < t_len; ++t) {
      char buf[4];
      in.read(buf, 4);
      if (!in) throw ParseError("truncated signal container: " + path);
      float v;
      std::memcpy(&v, buf, 4);
      signal.channels(c, t) = v;
    }
  }
  return signal;
}

}  // namespace ecgid
