#ifndef LPGP_PRECISION_HPP
#define LPGP_PRECISION_HPP

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>

namespace lpgp {

/*
 * Descriptor of a binary floating-point format with IEEE-754 style
 * interpretation: exponent bias 2^(e-1) - 1, an implicit leading bit and the
 * all-ones exponent reserved for infinities.
 *
 * Values of every emulated format are carried in doubles; a double "is in"
 * a format when quantize() leaves it unchanged.
 */
struct FloatFormat {
  int exponent_bits = 11;
  int mantissa_bits = 52;
  bool supports_subnormals = true;

  static constexpr FloatFormat fp64() { return {11, 52, true}; }
  static constexpr FloatFormat fp32() { return {8, 23, true}; }
  static constexpr FloatFormat fp16() { return {5, 10, true}; }
  static constexpr FloatFormat bf16() { return {8, 7, true}; }

  constexpr int sign_bits() const { return 1; }
  constexpr int bias() const { return (1 << (exponent_bits - 1)) - 1; }
  constexpr int min_exponent() const { return 1 - bias(); }
  constexpr int max_exponent() const { return bias(); }

  double max_finite() const;
  double min_positive_normal() const;
  // Smallest positive subnormal; equals min_positive_normal() when the
  // format flushes subnormals.
  double min_positive_subnormal() const;
  // Largest magnitude that quantizes to zero (ties included).
  double underflow_threshold() const;
  double unit_roundoff() const;
  // Spacing of representable numbers in [1, 2).
  double machine_epsilon() const;

  bool is_fp64() const { return exponent_bits == 11 && mantissa_bits == 52; }
  bool is_fp32() const {
    return exponent_bits == 8 && mantissa_bits == 23 && supports_subnormals;
  }

  std::string name() const;

  friend constexpr bool operator==(const FloatFormat &, const FloatFormat &) = default;
};

struct FormatConstants {
  double max_finite;
  double min_positive_normal;
  double unit_roundoff;
};

FormatConstants format_constants(const FloatFormat &fmt);

// Accepts "fp64", "fp32", "fp16", "bf16" (also "fp16-ftz" for a
// flush-to-zero binary16). Throws ConfigError otherwise.
FloatFormat parse_format(std::string_view name);

/*
 * Round-to-nearest-even projection of doubles onto a FloatFormat.
 *
 * Magnitudes beyond the largest finite value round to infinity under the
 * usual IEEE rule; when subnormals are disabled every input below the
 * smallest normal flushes to a signed zero.
 */
class Quantizer {
 public:
  Quantizer() : Quantizer(FloatFormat::fp64()) {}
  explicit Quantizer(const FloatFormat &fmt);

  const FloatFormat &format() const { return fmt_; }

  double operator()(double x) const noexcept {
    if (identity_) return x;
    constexpr std::uint64_t sign_bit = std::uint64_t(1) << 63;
    constexpr std::uint64_t inf_bits = std::uint64_t(0x7ff) << 52;
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(x);
    const std::uint64_t sign = bits & sign_bit;
    const std::uint64_t mag = bits ^ sign;
    if (mag >= inf_bits) return x;
    if (mag < min_normal_bits_) {
      if (!subnormals_) return std::copysign(0.0, x);
      // Adding 1.5 * 2^(52 + emin - m) leaves exactly the multiples of the
      // subnormal spacing 2^(emin - m), rounded to nearest even.
      const double r = (std::fabs(x) + subnormal_magic_) - subnormal_magic_;
      return std::copysign(r, x);
    }
    // Round-to-nearest-even on the dropped mantissa bits; a carry moves into
    // the exponent field, which is the correct rounding at binade edges.
    const std::uint64_t r =
        (mag + half_minus_one_ + ((mag >> shift_) & 1)) & ~low_mask_;
    return std::bit_cast<double>((r > max_finite_bits_ ? inf_bits : r) | sign);
  }

 private:
  FloatFormat fmt_;
  bool identity_ = true;
  bool subnormals_ = true;
  int shift_ = 0;
  std::uint64_t low_mask_ = 0;
  std::uint64_t half_minus_one_ = 0;
  std::uint64_t min_normal_bits_ = 0;
  std::uint64_t max_finite_bits_ = 0;
  double subnormal_magic_ = 0.0;
};

double quantize(double x, const FloatFormat &fmt);

/*
 * Rounding policies for the hot loops. Each is a callable double -> double;
 * kernels are templated on them so that binary64 and binary32 avoid the
 * generic bit manipulation.
 */
struct ExactRounding {
  double operator()(double x) const noexcept { return x; }
};

struct SingleRounding {
  static_assert(std::numeric_limits<float>::is_iec559);
  double operator()(double x) const noexcept { return static_cast<double>(static_cast<float>(x)); }
};

struct EmulatedRounding {
  Quantizer q;
  double operator()(double x) const noexcept { return q(x); }
};

template <typename Fn>
decltype(auto) with_rounding(const FloatFormat &fmt, Fn &&fn) {
  if (fmt.is_fp64()) return fn(ExactRounding{});
  if (fmt.is_fp32()) return fn(SingleRounding{});
  return fn(EmulatedRounding{Quantizer(fmt)});
}

// Sequential left-to-right sum with every partial rounded into fmt.
double naive_sum(std::span<const double> values, const FloatFormat &fmt);

// Sequential dot product; every product and partial sum rounded into fmt.
double naive_dot(std::span<const double> w, std::span<const double> z, const FloatFormat &fmt);

// Kahan compensated summation with every operation rounded into fmt.
double kahan_sum(std::span<const double> values, const FloatFormat &fmt);

enum class LogSign : int { Negative = -1, Zero = 0, Positive = 1 };

// A real number held as (log|v|, sign). Zero has log_magnitude == -inf.
struct SignedLogValue {
  double log_magnitude = -std::numeric_limits<double>::infinity();
  LogSign sign = LogSign::Zero;

  double value() const {
    if (sign == LogSign::Zero) return 0.0;
    return static_cast<int>(sign) * std::exp(log_magnitude);
  }
};

// log(w^T z) via the log-sum-exp transform, carried in binary64 whatever the
// format of the inputs. Exact-zero products are skipped; an exactly
// cancelling or all-zero sum comes back with sign Zero.
SignedLogValue lse_dot(std::span<const double> w, std::span<const double> z);

}  // namespace lpgp

#endif
