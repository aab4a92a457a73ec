#pragma once

#include <string>
#include <vector>

#include "ecgid/embedding.hpp"
#include "ecgid/errors.hpp"

namespace ecgid {

/// Dense multi-channel signal: one row per lead, one column per sample.
struct MultiLeadSignal {
  Matrix channels;  // C x T
  double sample_rate = 0.0;
};

/// Low-pass anti-aliasing filter description: odd-length Hamming-windowed
/// sinc with the cutoff expressed in Hz.
struct FirSpec {
  int taps = 101;
  double cutoff_hz = 0.0;
};

/// The filter used ahead of decimation to `f_target`: 101 taps, cutoff at
/// 0.45 * f_target.
FirSpec antialias_spec(double f_target);

/// Windowed-sinc coefficients: symmetric (linear phase), normalized to unit
/// DC gain. Throws FilterSpecError when taps is even or < 3, or when the
/// cutoff is not inside (0, f_source/2).
std::vector<double> design_fir(const FirSpec& spec, double f_source);

/// Low-pass filters every channel (zero-padded, center-aligned convolution)
/// and keeps every `factor`-th sample. The anti-aliasing cutoff is
/// 0.45 * (rate / factor). Throws ResampleError when factor < 1 or the signal
/// is empty.
MultiLeadSignal decimate(const MultiLeadSignal& in, int factor,
                         int threads = 1);

/// Decimation addressed by target rate; the rate ratio must be an integer.
MultiLeadSignal resample(const MultiLeadSignal& in, double f_target,
                         int threads = 1);

/// Applies (x - mu[c]) / sigma[c] per channel. The statistics are inputs
/// (estimated elsewhere, never on the evaluated signal). Throws
/// DegenerateChannel when any sigma is not positive, DimensionError when the
/// statistic vectors do not match the channel count.
MultiLeadSignal zscore(const MultiLeadSignal& in,
                       const std::vector<double>& mu,
                       const std::vector<double>& sigma);

/// Dense binary signal container: magic "SIG1", u32 channel count, u32 sample
/// count, then f32 samples row-major. The sample rate travels out of band.
void save_signal(const std::string& path, const MultiLeadSignal& signal);
MultiLeadSignal load_signal(const std::string& path, double sample_rate);

}  // namespace ecgid
