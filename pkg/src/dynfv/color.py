"""Colour-space conversions of 8-bit RGB rasters to unit-range channels.

HSV follows the hexcone model, YUV uses BT.601 weights and LAB goes through
linear sRGB and CIE XYZ under the D65 white point. Every output channel is
affinely mapped to [0, 1].
"""
import numpy as np

_SRGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
D65_WHITE = np.array([0.95047, 1.0, 1.08883])
_LUMA = np.array([0.299, 0.587, 0.114])
U_MAX = 0.436
V_MAX = 0.615

SPACES = ("RGB", "HSV", "LAB", "YUV", "GRAY")


def _unit_rgb(frame):
    frame = np.asarray(frame)
    if frame.shape[-1] != 3:
        raise ValueError(f"expected an RGB raster (..., 3), got {frame.shape}")
    return frame.astype(np.float64) / 255.0


def rgb_to_hsv(rgb):
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    v = rgb.max(axis=-1)
    c = v - rgb.min(axis=-1)
    s = np.divide(c, v, out=np.zeros_like(v), where=v > 0)
    safe_c = np.where(c > 0, c, 1.0)
    h = np.where(v == r, ((g - b) / safe_c) % 6.0,
                 np.where(v == g, (b - r) / safe_c + 2.0, (r - g) / safe_c + 4.0))
    h = np.where(c > 0, h / 6.0, 0.0)
    return np.stack([h, s, v], axis=-1)


def _lab_f(t):
    delta = 6.0 / 29.0
    return np.where(t > delta ** 3, np.cbrt(t), t / (3 * delta ** 2) + 4.0 / 29.0)


def rgb_to_lab(rgb):
    """CIE L*a*b* (unscaled: L in [0, 100], a and b roughly in [-128, 127])."""
    lin = np.where(rgb <= 0.04045, rgb / 12.92, ((rgb + 0.055) / 1.055) ** 2.4)
    xyz = lin @ _SRGB_TO_XYZ.T / D65_WHITE
    fx, fy, fz = (_lab_f(xyz[..., i]) for i in range(3))
    return np.stack([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)], axis=-1)


def rgb_to_yuv(rgb):
    y = rgb @ _LUMA
    return np.stack([y, 0.492 * (rgb[..., 2] - y), 0.877 * (rgb[..., 0] - y)], axis=-1)


def convert_color(frame, space):
    """Channels of ``frame`` (H, W, 3 uint8) in ``space``, each scaled to [0, 1]."""
    rgb = _unit_rgb(frame)
    space = space.upper()
    if space == "RGB":
        return rgb
    if space == "HSV":
        return rgb_to_hsv(rgb)
    if space == "GRAY":
        return (rgb @ _LUMA)[..., None]
    if space == "YUV":
        yuv = rgb_to_yuv(rgb)
        out = np.stack([yuv[..., 0], yuv[..., 1] / (2 * U_MAX) + 0.5,
                        yuv[..., 2] / (2 * V_MAX) + 0.5], axis=-1)
        return np.clip(out, 0.0, 1.0)
    if space == "LAB":
        lab = rgb_to_lab(rgb)
        out = np.stack([lab[..., 0] / 100.0, (lab[..., 1] + 128.0) / 255.0,
                        (lab[..., 2] + 128.0) / 255.0], axis=-1)
        return np.clip(out, 0.0, 1.0)
    raise ValueError(f"unknown colour space {space!r}; expected one of {SPACES}")
