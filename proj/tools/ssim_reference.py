"""Reference SSIM/PSNR values for the frozen numbers in tests/unit/metrics_test.cpp.

Regenerates oracle::pattern_image and scores pairs with scikit-image.
"""
import numpy as np
from skimage.metrics import peak_signal_noise_ratio, structural_similarity


def pattern_image(w, h, c, variant):
    y, x, ch = np.meshgrid(np.arange(h), np.arange(w), np.arange(c), indexing="ij")
    return (0.5 + 0.3 * np.sin(0.21 * x * (1.0 + 0.1 * variant) + 0.13 * y + 0.9 * ch + variant)
            + 0.15 * np.cos(0.007 * x * y + 0.5 * variant + ch))


def ssim(a, b):
    return structural_similarity(a, b, gaussian_weights=True, sigma=1.5, use_sample_covariance=False,
                                 data_range=1.0, channel_axis=2)


for (w, h), (va, vb) in [((48, 40), (0, 1)), ((48, 40), (0, 3)), ((32, 32), (2, 5))]:
    a = pattern_image(w, h, 3, va)
    b = pattern_image(w, h, 3, vb)
    print(f"{w}x{h} variants {va},{vb}: ssim {ssim(a, b):.15f} psnr {peak_signal_noise_ratio(a, b, data_range=1.0):.15f}")

# Blend a = p0, b = 0.8 * p0 + 0.2 * p1 (a near-identical pair).
a = pattern_image(48, 40, 3, 0)
b = 0.8 * a + 0.2 * pattern_image(48, 40, 3, 1)
print(f"blend 48x40: ssim {ssim(a, b):.15f} psnr {peak_signal_noise_ratio(a, b, data_range=1.0):.15f}")
g = pattern_image(40, 40, 1, 4)[:, :, 0]
gb = pattern_image(40, 40, 1, 6)[:, :, 0]
print(f"gray 40x40 variants 4,6: ssim {structural_similarity(g, gb, gaussian_weights=True, sigma=1.5, use_sample_covariance=False, data_range=1.0):.15f}")
