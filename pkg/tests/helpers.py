"""Shared builders for integration-style tests."""

import numpy as np

from featmorph import grid


def smooth_image(n=64):
    """Band-limited color scene; detail survives bilinear down/up cycles."""
    x = np.linspace(0, 1, n)
    gx, gy = np.meshgrid(x, x)
    r = 0.4 + 0.3 * np.exp(-((gx - 0.4) ** 2 + (gy - 0.5) ** 2) / 0.05) + 0.15 * np.sin(3 * gx + 2 * gy)
    g = 0.5 + 0.25 * np.exp(-((gx - 0.6) ** 2 + (gy - 0.3) ** 2) / 0.08)
    b = 0.3 + 0.2 * gx + 0.1 * gy
    return np.clip(np.stack([r, g, b]), 0.0, 1.0)


def square_pair(n=64, size=20, shift=8):
    """White square on black, translated horizontally by ``shift`` pixels."""
    u_a = np.zeros((3, n, n))
    u_b = np.zeros((3, n, n))
    y0 = (n - size) // 2
    x0 = (n - size) // 2 - shift // 2
    u_a[:, y0 : y0 + size, x0 : x0 + size] = 1.0
    u_b[:, y0 : y0 + size, x0 + shift : x0 + shift + size] = 1.0
    return u_a, u_b


def blob_pair(n=64):
    """Translated Gaussian blob with an intensity change on a gray background."""
    x = np.arange(n)
    gx, gy = np.meshgrid(x, x)
    blob_a = np.exp(-((gx - 24) ** 2 + (gy - 32) ** 2) / (2 * 6.0**2))
    blob_b = np.exp(-((gx - 40) ** 2 + (gy - 32) ** 2) / (2 * 6.0**2))
    u_a = np.clip(0.2 + 1.0 * np.stack([blob_a, 0.8 * blob_a, 0.6 * blob_a]), 0, 1)
    u_b = np.clip(0.2 + 0.7 * np.stack([blob_b, 0.8 * blob_b, 0.6 * blob_b]), 0, 1)
    return u_a, u_b


def wave_pair(n=64):
    """Same striped texture shifted by a quarter period."""
    x = np.linspace(0, 1, n)
    gx, gy = np.meshgrid(x, x)
    u_a = np.stack(
        [
            0.5 + 0.4 * np.sin(8 * gx + 2 * gy),
            0.5 + 0.4 * np.sin(8 * gx + 2 * gy + 0.5),
            0.5 + 0.3 * np.cos(6 * gy),
        ]
    )
    u_b = np.stack(
        [
            0.5 + 0.4 * np.sin(8 * (gx - 0.08) + 2 * gy),
            0.5 + 0.4 * np.sin(8 * (gx - 0.08) + 2 * gy + 0.5),
            0.5 + 0.3 * np.cos(6 * gy),
        ]
    )
    return np.clip(u_a, 0, 1), np.clip(u_b, 0, 1)


def blend_energy(u_a, u_b, delta=1.0):
    """Energy of the straight feature blend with identity deformations."""
    c = u_a.shape[0]
    n_px = u_a.shape[1] * u_a.shape[2]
    return float(np.sum((u_b - u_a) ** 2) / (n_px * 2 * c * delta))


def synthetic_pyramid(image, schedule, channels=8):
    """Deterministic per-level feature stacks derived from the image."""
    gray = image.mean(axis=0)
    tensors = []
    for dims in schedule.dims:
        g = grid.resample_bilinear(gray, dims.width, dims.height)
        feats = [
            grid.gaussian_blur(g, 1.0),
            grid.gaussian_blur(g, 2.0) - grid.gaussian_blur(g, 1.0),
            grid.sobel_gradient(g, unit_scale=False)[..., 0],
            grid.sobel_gradient(g, unit_scale=False)[..., 1],
            g * g,
            np.abs(grid.sobel_gradient(g, unit_scale=False)).sum(axis=-1),
            grid.gaussian_blur(g * g, 1.5),
            g - grid.gaussian_blur(g, 3.0),
        ][:channels]
        stack = np.stack(feats)
        rms = np.sqrt(np.mean(stack * stack))
        tensors.append(stack / rms if rms > 0 else stack)
    return tensors


def sample_positions(field, pos):
    """Bilinear lookup of a (h, w, 2) field at fractional (h, w, 2) positions."""
    h, w = field.shape[:2]
    x = np.clip(pos[..., 0], 0, w - 1)
    y = np.clip(pos[..., 1], 0, h - 1)
    x0 = np.minimum(x.astype(np.int64), w - 2)
    y0 = np.minimum(y.astype(np.int64), h - 2)
    tx = (x - x0)[..., None]
    ty = (y - y0)[..., None]
    return (
        field[y0, x0] * (1 - tx) * (1 - ty)
        + field[y0, x0 + 1] * tx * (1 - ty)
        + field[y0 + 1, x0] * (1 - tx) * ty
        + field[y0 + 1, x0 + 1] * tx * ty
    )


def compose_transport(phis):
    """Chain the per-step deformations into the end-to-end transport map."""
    dims = grid.GridDims(phis[0].shape[1], phis[0].shape[0])
    pos = grid.identity_map(dims)
    for phi in phis:
        pos = sample_positions(phi, pos)
    return pos
