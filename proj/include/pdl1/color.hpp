#pragma once

#include <cstdint>

namespace pdl1::color {

/// sRGB color with channels in [0, 255]; fractional values are allowed.
struct Rgb {
    double r = 0;
    double g = 0;
    double b = 0;
};

struct Lab {
    double L = 0;
    double a = 0;
    double b = 0;
};

/// Background shade of the slide glass.
inline constexpr Rgb reference_white{238.0, 238.0, 238.0};

/// Mean of sampled PD-L1 stained pixels.
inline constexpr Rgb base_brown{117.3, 88.9, 67.3};

/// sRGB (D65, 2 degree observer) to CIELAB. Throws InputDomainError for a
/// channel outside [0, 255] or non-finite.
Lab srgb_to_lab(const Rgb& c);

/// CIEDE2000 color difference with kL = kC = kH = 1.
double ciede2000(const Lab& x, const Lab& y);

double distance_to_white(const Rgb& c);
double distance_to_brown(const Rgb& c);

/// 8-bit fast paths; identical results to the Rgb overloads.
double distance_to_white(std::uint8_t r, std::uint8_t g, std::uint8_t b);
double distance_to_brown(std::uint8_t r, std::uint8_t g, std::uint8_t b);

}  // namespace pdl1::color
