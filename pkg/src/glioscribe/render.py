"""Axial slice rendering: grayscale windowing plus alpha-composited label
overlays, and PNG encoding for the review service."""

import io

import numpy as np

# default tumor overlay colors, keyed by canonical sub-region name
TUMOR_RGBA = {
    "NCR": (220, 50, 47, 200),
    "ED": (250, 210, 60, 170),
    "ET": (64, 200, 96, 210),
}
MIDLINE_RGBA = (70, 130, 240, 230)
IDEAL_RGBA = (240, 240, 240, 230)


def palette_for(label_vol, name_to_rgba):
    """Translate a name->RGBA map into label-int->RGBA for one LabelVolume."""
    out = {}
    for value, name in label_vol.scheme.items():
        if name in name_to_rgba:
            out[value] = name_to_rgba[name]
    return out


def render_axial_slice(vol, z, window=None, overlays=()):
    """Render one axial slice to an RGBA array indexed [i, j] = voxel (i, j, z).

    Parameters
    ----------
    vol : Volume (background intensities)
    z : axial slice index
    window : (lo, hi) display window, lo < hi; None = slice min/max
    overlays : iterable of (LabelVolume, {label_int: (r, g, b, a)})

    Returns
    -------
    uint8 array of shape (nx, ny, 4), fully opaque.
    """
    nx, ny, nz = vol.dims
    if not 0 <= z < nz:
        raise ValueError(f"slice index {z} out of range 0..{nz - 1}")
    sl = np.asarray(vol.data[:, :, z], np.float64)
    if window is None:
        lo, hi = float(sl.min()), float(sl.max())
        if hi <= lo:
            hi = lo + 1.0
    else:
        lo, hi = float(window[0]), float(window[1])
        if not lo < hi:
            raise ValueError(f"window lo must be < hi, got ({lo}, {hi})")
    gray = np.clip((sl - lo) / (hi - lo), 0.0, 1.0) * 255.0
    img = np.empty((nx, ny, 4), np.float64)
    img[:, :, 0] = gray
    img[:, :, 1] = gray
    img[:, :, 2] = gray
    img[:, :, 3] = 255.0

    for label_vol, palette in overlays:
        if label_vol.dims != vol.dims:
            raise ValueError("overlay grid does not match the volume")
        osl = label_vol.data[:, :, z]
        for value, (r, g, b, a) in palette.items():
            where = osl == value
            if not where.any():
                continue
            alpha = a / 255.0
            for c, comp in enumerate((r, g, b)):
                img[where, c] = alpha * comp + (1.0 - alpha) * img[where, c]
    return np.rint(img).astype(np.uint8)


def encode_png(rgba_xy):
    """Encode an (nx, ny, 4) slice to PNG bytes, anterior (max y) at the top."""
    from PIL import Image

    # rows = y reversed, cols = x
    arr = np.transpose(rgba_xy, (1, 0, 2))[::-1]
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(arr), mode="RGBA").save(buf, format="PNG")
    return buf.getvalue()
