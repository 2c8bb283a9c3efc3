#include "lpgp/precision.hpp"

#include <algorithm>
#include <vector>

#include "lpgp/errors.hpp"

namespace lpgp {

double FloatFormat::max_finite() const {
  // (2 - 2^-m) * 2^emax
  return std::ldexp(2.0 - std::ldexp(1.0, -mantissa_bits), max_exponent());
}

double FloatFormat::min_positive_normal() const { return std::ldexp(1.0, min_exponent()); }

double FloatFormat::min_positive_subnormal() const {
  if (!supports_subnormals) return min_positive_normal();
  return std::ldexp(1.0, min_exponent() - mantissa_bits);
}

double FloatFormat::underflow_threshold() const {
  if (!supports_subnormals) return min_positive_normal();
  // Half the smallest subnormal rounds to the even neighbour, zero.
  return 0.5 * min_positive_subnormal();
}

double FloatFormat::unit_roundoff() const { return std::ldexp(1.0, -(mantissa_bits + 1)); }

double FloatFormat::machine_epsilon() const { return std::ldexp(1.0, -mantissa_bits); }

std::string FloatFormat::name() const {
  if (is_fp64()) return "fp64";
  if (*this == fp32()) return "fp32";
  if (*this == fp16()) return "fp16";
  if (*this == bf16()) return "bf16";
  if (exponent_bits == 5 && mantissa_bits == 10 && !supports_subnormals) return "fp16-ftz";
  return "e" + std::to_string(exponent_bits) + "m" + std::to_string(mantissa_bits) +
         (supports_subnormals ? "" : "-ftz");
}

FormatConstants format_constants(const FloatFormat &fmt) {
  if (fmt.exponent_bits < 2 || fmt.mantissa_bits < 1) {
    throw ConfigError("format needs at least 2 exponent bits and 1 mantissa bit");
  }
  return {fmt.max_finite(), fmt.min_positive_normal(), fmt.unit_roundoff()};
}

FloatFormat parse_format(std::string_view name) {
  if (name == "fp64") return FloatFormat::fp64();
  if (name == "fp32") return FloatFormat::fp32();
  if (name == "fp16") return FloatFormat::fp16();
  if (name == "bf16") return FloatFormat::bf16();
  if (name == "fp16-ftz") return {5, 10, false};
  throw ConfigError("unknown float format '" + std::string(name) +
                    "' (expected fp64, fp32, fp16 or bf16)");
}

Quantizer::Quantizer(const FloatFormat &fmt) : fmt_(fmt) {
  if (fmt.exponent_bits < 2 || fmt.mantissa_bits < 1) {
    throw ConfigError("format needs at least 2 exponent bits and 1 mantissa bit");
  }
  identity_ = fmt.is_fp64();
  if (identity_) return;
  // The emulation scales by powers of two that must stay normal doubles.
  if (fmt.exponent_bits > 10 || fmt.mantissa_bits > 50 ||
      fmt.min_exponent() - fmt.mantissa_bits < -1022) {
    throw ConfigError("format " + fmt.name() + " cannot be emulated in binary64");
  }
  subnormals_ = fmt.supports_subnormals;
  shift_ = 52 - fmt.mantissa_bits;
  low_mask_ = (std::uint64_t(1) << shift_) - 1;
  half_minus_one_ = (std::uint64_t(1) << (shift_ - 1)) - 1;
  min_normal_bits_ = std::bit_cast<std::uint64_t>(fmt.min_positive_normal());
  max_finite_bits_ = std::bit_cast<std::uint64_t>(fmt.max_finite());
  subnormal_magic_ = std::ldexp(1.5, 52 + fmt.min_exponent() - fmt.mantissa_bits);
}

double quantize(double x, const FloatFormat &fmt) { return Quantizer(fmt)(x); }

double naive_sum(std::span<const double> values, const FloatFormat &fmt) {
  return with_rounding(fmt, [&](auto round) {
    double acc = 0.0;
    for (double v : values) acc = round(acc + v);
    return acc;
  });
}

double naive_dot(std::span<const double> w, std::span<const double> z, const FloatFormat &fmt) {
  if (w.size() != z.size()) throw DimensionMismatch("naive_dot: length mismatch");
  return with_rounding(fmt, [&](auto round) {
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) acc = round(acc + round(w[i] * z[i]));
    return acc;
  });
}

double kahan_sum(std::span<const double> values, const FloatFormat &fmt) {
  return with_rounding(fmt, [&](auto round) {
    double sum = 0.0;
    double comp = 0.0;
    for (double v : values) {
      const double y = round(v - comp);
      const double t = round(sum + y);
      comp = round(round(t - sum) - y);
      sum = t;
    }
    return sum;
  });
}

SignedLogValue lse_dot(std::span<const double> w, std::span<const double> z) {
  if (w.size() != z.size()) throw DimensionMismatch("lse_dot: length mismatch");
  if (w.empty()) throw DimensionMismatch("lse_dot: empty vectors");

  double y_max = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] == 0.0 || z[i] == 0.0) continue;
    y_max = std::max(y_max, std::log(std::fabs(w[i])) + std::log(std::fabs(z[i])));
  }
  if (y_max == -std::numeric_limits<double>::infinity()) return {};

  // Neumaier-compensated sum of the shifted signed exponentials.
  double sum = 0.0;
  double comp = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] == 0.0 || z[i] == 0.0) continue;
    const double y = std::log(std::fabs(w[i])) + std::log(std::fabs(z[i]));
    const bool negative = std::signbit(w[i]) != std::signbit(z[i]);
    const double term = negative ? -std::exp(y - y_max) : std::exp(y - y_max);
    const double t = sum + term;
    if (std::fabs(sum) >= std::fabs(term)) {
      comp += (sum - t) + term;
    } else {
      comp += (term - t) + sum;
    }
    sum = t;
  }
  sum += comp;
  if (sum == 0.0) return {};
  return {y_max + std::log(std::fabs(sum)), sum > 0.0 ? LogSign::Positive : LogSign::Negative};
}

}  // namespace lpgp
