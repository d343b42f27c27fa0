#pragma once

#include <array>

#include "bteach/image.hpp"
#include "bteach/saliency.hpp"

namespace bteach {

// Blur window width for saliency value z: ceil(30 / (1 + exp(20 z - 10))).
// Important pixels (z near 1) get width 1 and stay sharp.
int blur_window_width(double z);

// Each output pixel is the per-channel mean of the w x w window centred on it
// (clipped at the image border), with w = blur_window_width(map value). For
// even w the window spans [x - w/2, x + w/2 - 1].
Image render_blur(const Image& image, const SaliencyMap& map);

// Matplotlib "jet" colormap, piecewise linear. Returns RGB in [0, 1].
//   red:   (0, 0) (0.35, 0) (0.66, 1) (0.89, 1) (1, 0.5)
//   green: (0, 0) (0.125, 0) (0.375, 1) (0.64, 1) (0.91, 0) (1, 0)
//   blue:  (0, 0.5) (0.11, 1) (0.34, 1) (0.65, 0) (1, 0)
std::array<double, 3> jet(double z);

// (1 - alpha) * image + alpha * 255 * jet(z), rounded per channel.
Image render_jet(const Image& image, const SaliencyMap& map, double alpha = 0.4);

}  // namespace bteach
