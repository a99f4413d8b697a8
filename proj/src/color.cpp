#include "pdl1/color.hpp"

#include <array>
#include <cmath>
#include <numbers>

#include "pdl1/common.hpp"

namespace pdl1::color {

namespace {

constexpr double pi = std::numbers::pi;

// sRGB primaries to XYZ (IEC 61966-2-1, D65).
constexpr double M[3][3] = {
    {0.412453, 0.357580, 0.180423},
    {0.212671, 0.715160, 0.072169},
    {0.019334, 0.119193, 0.950227},
};

// White reference is RGB(1,1,1) pushed through M so white maps to a = b = 0.
constexpr double white_x = M[0][0] + M[0][1] + M[0][2];
constexpr double white_y = M[1][0] + M[1][1] + M[1][2];
constexpr double white_z = M[2][0] + M[2][1] + M[2][2];

double linearize(double v)
{
    return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

constexpr double lab_eps = 216.0 / 24389.0;
constexpr double lab_kappa = 24389.0 / 27.0;

double lab_f(double t) { return t > lab_eps ? std::cbrt(t) : (lab_kappa * t + 16.0) / 116.0; }

void check_channel(double v)
{
    if (!std::isfinite(v) || v < 0.0 || v > 255.0) {
        throw InputDomainError("RGB channel out of [0,255]: " + std::to_string(v));
    }
}

Lab linear_to_lab(double r, double g, double b)
{
    const double x = (M[0][0] * r + M[0][1] * g + M[0][2] * b) / white_x;
    const double y = (M[1][0] * r + M[1][1] * g + M[1][2] * b) / white_y;
    const double z = (M[2][0] * r + M[2][1] * g + M[2][2] * b) / white_z;
    const double fx = lab_f(x), fy = lab_f(y), fz = lab_f(z);
    const double L = y > lab_eps ? 116.0 * fy - 16.0 : lab_kappa * y;
    return {L, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

const std::array<double, 256>& linear_table()
{
    static const std::array<double, 256> table = [] {
        std::array<double, 256> t{};
        for (int i = 0; i < 256; ++i) t[i] = linearize(i / 255.0);
        return t;
    }();
    return table;
}

Lab lab_u8(std::uint8_t r, std::uint8_t g, std::uint8_t b)
{
    const auto& lin = linear_table();
    return linear_to_lab(lin[r], lin[g], lin[b]);
}

double deg(double rad) { return rad * 180.0 / pi; }
double rad(double deg) { return deg * pi / 180.0; }

}  // namespace

Lab srgb_to_lab(const Rgb& c)
{
    check_channel(c.r);
    check_channel(c.g);
    check_channel(c.b);
    return linear_to_lab(linearize(c.r / 255.0), linearize(c.g / 255.0), linearize(c.b / 255.0));
}

// Follows the reference procedure of Sharma, Wu and Dalal (2005), including
// the hue-mean branch for |h1 - h2| > 180 degrees and h' = 0 for zero chroma.
double ciede2000(const Lab& x, const Lab& y)
{
    if (!std::isfinite(x.L) || !std::isfinite(x.a) || !std::isfinite(x.b) || !std::isfinite(y.L) ||
        !std::isfinite(y.a) || !std::isfinite(y.b)) {
        throw InputDomainError("ciede2000: non-finite Lab input");
    }
    constexpr double pow25_7 = 6103515625.0;  // 25^7

    const double c1 = std::hypot(x.a, x.b);
    const double c2 = std::hypot(y.a, y.b);
    const double c_mean = 0.5 * (c1 + c2);
    const double c_mean7 = std::pow(c_mean, 7.0);
    const double g = 0.5 * (1.0 - std::sqrt(c_mean7 / (c_mean7 + pow25_7)));

    const double a1p = (1.0 + g) * x.a;
    const double a2p = (1.0 + g) * y.a;
    const double c1p = std::hypot(a1p, x.b);
    const double c2p = std::hypot(a2p, y.b);

    auto hue = [](double b, double ap) {
        if (b == 0.0 && ap == 0.0) return 0.0;
        double h = deg(std::atan2(b, ap));
        return h < 0.0 ? h + 360.0 : h;
    };
    const double h1p = hue(x.b, a1p);
    const double h2p = hue(y.b, a2p);

    const double dLp = y.L - x.L;
    const double dCp = c2p - c1p;

    double dhp = 0.0;
    const double chroma_product = c1p * c2p;
    if (chroma_product != 0.0) {
        dhp = h2p - h1p;
        if (dhp > 180.0) {
            dhp -= 360.0;
        } else if (dhp < -180.0) {
            dhp += 360.0;
        }
    }
    const double dHp = 2.0 * std::sqrt(chroma_product) * std::sin(rad(dhp) / 2.0);

    const double Lp_mean = 0.5 * (x.L + y.L);
    const double Cp_mean = 0.5 * (c1p + c2p);

    double hp_mean = h1p + h2p;
    if (chroma_product != 0.0) {
        if (std::abs(h1p - h2p) <= 180.0) {
            hp_mean *= 0.5;
        } else if (h1p + h2p < 360.0) {
            hp_mean = 0.5 * (h1p + h2p + 360.0);
        } else {
            hp_mean = 0.5 * (h1p + h2p - 360.0);
        }
    }

    const double t = 1.0 - 0.17 * std::cos(rad(hp_mean - 30.0)) + 0.24 * std::cos(rad(2.0 * hp_mean)) +
                     0.32 * std::cos(rad(3.0 * hp_mean + 6.0)) - 0.20 * std::cos(rad(4.0 * hp_mean - 63.0));
    const double d_theta = 30.0 * std::exp(-std::pow((hp_mean - 275.0) / 25.0, 2.0));
    const double Cp_mean7 = std::pow(Cp_mean, 7.0);
    const double rc = 2.0 * std::sqrt(Cp_mean7 / (Cp_mean7 + pow25_7));
    const double l50 = (Lp_mean - 50.0) * (Lp_mean - 50.0);
    const double sl = 1.0 + 0.015 * l50 / std::sqrt(20.0 + l50);
    const double sc = 1.0 + 0.045 * Cp_mean;
    const double sh = 1.0 + 0.015 * Cp_mean * t;
    const double rt = -std::sin(rad(2.0 * d_theta)) * rc;

    const double tl = dLp / sl;
    const double tc = dCp / sc;
    const double th = dHp / sh;
    return std::sqrt(std::max(0.0, tl * tl + tc * tc + th * th + rt * tc * th));
}

namespace {

const Lab& white_lab()
{
    static const Lab lab = srgb_to_lab(reference_white);
    return lab;
}

const Lab& brown_lab()
{
    static const Lab lab = srgb_to_lab(base_brown);
    return lab;
}

}  // namespace

double distance_to_white(const Rgb& c) { return ciede2000(srgb_to_lab(c), white_lab()); }

double distance_to_brown(const Rgb& c) { return ciede2000(srgb_to_lab(c), brown_lab()); }

double distance_to_white(std::uint8_t r, std::uint8_t g, std::uint8_t b)
{
    return ciede2000(lab_u8(r, g, b), white_lab());
}

double distance_to_brown(std::uint8_t r, std::uint8_t g, std::uint8_t b)
{
    return ciede2000(lab_u8(r, g, b), brown_lab());
}

}  // namespace pdl1::color
