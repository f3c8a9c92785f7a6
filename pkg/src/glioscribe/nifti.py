"""NIfTI-1 single-file reader/writer.

Supported payload datatypes: uint8, int16, int32, float32, float64; anything
else is rejected with a clear error. Byte order is inferred from dim[0]
(valid range 1..7); gzip is detected by the 0x1F8B prefix, never by file
extension. The affine comes from the sform when sform_code > 0, else from
the quaternion qform, else from pixdim scaling. Loaded volumes are always
reoriented to canonical RAS.

Displacement fields travel as 5-D NIfTI with dim[5] = 3 and vector intent,
holding world-mm displacement vectors.
"""

import gzip

import numpy as np

from .volume import DisplacementField, LabelVolume, Volume, to_canonical


class NiftiError(ValueError):
    pass


_HDR_FIELDS = [
    ("sizeof_hdr", "i4"),
    ("data_type", "S10"),
    ("db_name", "S18"),
    ("extents", "i4"),
    ("session_error", "i2"),
    ("regular", "S1"),
    ("dim_info", "u1"),
    ("dim", "i2", (8,)),
    ("intent_p1", "f4"),
    ("intent_p2", "f4"),
    ("intent_p3", "f4"),
    ("intent_code", "i2"),
    ("datatype", "i2"),
    ("bitpix", "i2"),
    ("slice_start", "i2"),
    ("pixdim", "f4", (8,)),
    ("vox_offset", "f4"),
    ("scl_slope", "f4"),
    ("scl_inter", "f4"),
    ("slice_end", "i2"),
    ("slice_code", "u1"),
    ("xyzt_units", "u1"),
    ("cal_max", "f4"),
    ("cal_min", "f4"),
    ("slice_duration", "f4"),
    ("toffset", "f4"),
    ("glmax", "i4"),
    ("glmin", "i4"),
    ("descrip", "S80"),
    ("aux_file", "S24"),
    ("qform_code", "i2"),
    ("sform_code", "i2"),
    ("quatern_b", "f4"),
    ("quatern_c", "f4"),
    ("quatern_d", "f4"),
    ("qoffset_x", "f4"),
    ("qoffset_y", "f4"),
    ("qoffset_z", "f4"),
    ("srow_x", "f4", (4,)),
    ("srow_y", "f4", (4,)),
    ("srow_z", "f4", (4,)),
    ("intent_name", "S16"),
    ("magic", "S4"),
]

# NIfTI-1 datatype codes we accept
_DT_TO_NUMPY = {2: "u1", 4: "i2", 8: "i4", 16: "f4", 64: "f8"}
_NUMPY_TO_DT = {"uint8": 2, "int16": 4, "int32": 8, "float32": 16, "float64": 64}
_BITPIX = {2: 8, 4: 16, 8: 32, 16: 32, 64: 64}

_INTENT_VECTOR = 1007


def _hdr_dtype(bo):
    out = []
    for f in _HDR_FIELDS:
        if len(f) == 2:
            name, fmt = f
            out.append((name, bo + fmt))
        else:
            name, fmt, shape = f
            out.append((name, bo + fmt, shape))
    dt = np.dtype(out)
    assert dt.itemsize == 348
    return dt


def _read_raw(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _quaternion_affine(hdr):
    b = float(hdr["quatern_b"])
    c = float(hdr["quatern_c"])
    d = float(hdr["quatern_d"])
    a = np.sqrt(max(0.0, 1.0 - (b * b + c * c + d * d)))
    R = np.array([
        [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
        [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
        [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - b * b - c * c],
    ])
    pixdim = np.asarray(hdr["pixdim"], np.float64)
    qfac = -1.0 if pixdim[0] < 0 else 1.0
    scale = np.array([pixdim[1], pixdim[2], qfac * pixdim[3]])
    affine = np.eye(4)
    affine[:3, :3] = R * scale
    affine[:3, 3] = [float(hdr["qoffset_x"]), float(hdr["qoffset_y"]),
                     float(hdr["qoffset_z"])]
    return affine


def _header_affine(hdr):
    if int(hdr["sform_code"]) > 0:
        return np.array([hdr["srow_x"], hdr["srow_y"], hdr["srow_z"],
                         [0, 0, 0, 1]], np.float64)
    if int(hdr["qform_code"]) > 0:
        return _quaternion_affine(hdr)
    pixdim = np.asarray(hdr["pixdim"], np.float64)
    affine = np.eye(4)
    affine[0, 0], affine[1, 1], affine[2, 2] = pixdim[1], pixdim[2], pixdim[3]
    return affine


def load_nifti(path, kind="auto"):
    """Load a NIfTI-1 file.

    Parameters
    ----------
    path : file path (.nii or .nii.gz, gzip detected by content)
    kind : "auto" (scalar Volume, or DisplacementField for 5-D vector files),
        "labels" (LabelVolume; payload must be integral), or "scalar"

    Returns
    -------
    Volume, LabelVolume, or DisplacementField in canonical RAS orientation.
    """
    raw = _read_raw(path)
    if len(raw) < 352:
        raise NiftiError(f"{path}: file shorter than a NIfTI-1 header")
    dim0_le = int.from_bytes(raw[40:42], "little", signed=True)
    dim0_be = int.from_bytes(raw[40:42], "big", signed=True)
    if 1 <= dim0_le <= 7:
        bo = "<"
    elif 1 <= dim0_be <= 7:
        bo = ">"
    else:
        raise NiftiError(f"{path}: dim[0] invalid in both byte orders")
    hdr = np.frombuffer(raw[:348], dtype=_hdr_dtype(bo))[0]
    # numpy S-dtype scalars drop trailing NULs, so slice the raw bytes
    magic = bytes(raw[344:348])
    if magic != b"n+1\x00":
        raise NiftiError(f"{path}: bad magic {magic!r} (expected single-file 'n+1')")
    dt_code = int(hdr["datatype"])
    if dt_code not in _DT_TO_NUMPY:
        raise NiftiError(
            f"{path}: unsupported datatype code {dt_code} "
            f"(supported: {sorted(_DT_TO_NUMPY)})")
    dim = np.asarray(hdr["dim"], np.int64)
    ndim = int(dim[0])
    shape = tuple(int(v) for v in dim[1:1 + ndim])
    if any(v <= 0 for v in shape):
        raise NiftiError(f"{path}: non-positive dim entries {shape}")
    dtype = np.dtype(bo + _DT_TO_NUMPY[dt_code])
    vox_offset = int(float(hdr["vox_offset"]))
    n_items = int(np.prod(shape))
    expected = n_items * dtype.itemsize
    payload = raw[vox_offset:vox_offset + expected]
    if len(payload) < expected:
        raise NiftiError(
            f"{path}: payload holds {len(payload)} bytes, header promises {expected}")
    arr = np.frombuffer(payload, dtype=dtype).reshape(shape, order="F")
    arr = arr.astype(arr.dtype.newbyteorder("="))
    affine = _header_affine(hdr)

    is_vector = (ndim == 5 and shape[4] == 3
                 and (int(hdr["intent_code"]) == _INTENT_VECTOR
                      or bytes(hdr["intent_name"]).rstrip(b"\x00") == b"vector"))
    if is_vector:
        if shape[3] != 1:
            raise NiftiError(f"{path}: vector file must have dim[4]=1, got {shape[3]}")
        vectors = np.ascontiguousarray(arr[:, :, :, 0, :].astype(np.float64))
        return to_canonical(DisplacementField(vectors, affine))
    if ndim != 3:
        # tolerate trailing singleton dims (common in converted data)
        if all(v == 1 for v in shape[3:]):
            arr = arr.reshape(shape[:3], order="F")
        else:
            raise NiftiError(f"{path}: expected a 3-D volume, got dims {shape}")

    slope = float(hdr["scl_slope"])
    inter = float(hdr["scl_inter"])
    if slope not in (0.0, 1.0) or inter != 0.0:
        if slope == 0.0:
            slope = 1.0
        arr = arr.astype(np.float64) * slope + inter

    if kind == "labels":
        if np.issubdtype(arr.dtype, np.floating):
            if not np.all(arr == np.rint(arr)):
                raise NiftiError(f"{path}: non-integral values in a label volume")
            arr = arr.astype(np.int32)
        return to_canonical(LabelVolume(np.ascontiguousarray(arr), affine))
    if kind not in ("auto", "scalar"):
        raise ValueError(f"unknown kind {kind!r}")
    return to_canonical(Volume(np.ascontiguousarray(arr), affine))


def _choose_int_dtype(data):
    lo, hi = (int(data.min()), int(data.max())) if data.size else (0, 0)
    if 0 <= lo and hi <= 255:
        return np.uint8
    if -2 ** 15 <= lo and hi < 2 ** 15:
        return np.int16
    if -2 ** 31 <= lo and hi < 2 ** 31:
        return np.int32
    raise NiftiError("integer data exceeds int32 range")


def _build_header(data_dims, pixdim_xyz, affine, dt_code, ndim, dim_tail=(),
                  intent_code=0, intent_name=b""):
    hdr = np.zeros(1, dtype=_hdr_dtype("<"))[0]
    hdr["sizeof_hdr"] = 348
    hdr["regular"] = b"r"
    dim = np.ones(8, np.int16)
    dim[0] = ndim
    for i, v in enumerate(data_dims):
        dim[1 + i] = v
    for i, v in enumerate(dim_tail):
        dim[4 + i] = v
    hdr["dim"] = dim
    hdr["intent_code"] = intent_code
    hdr["intent_name"] = intent_name
    hdr["datatype"] = dt_code
    hdr["bitpix"] = _BITPIX[dt_code]
    pixdim = np.zeros(8, np.float32)
    pixdim[0] = 1.0
    pixdim[1:4] = pixdim_xyz
    pixdim[4:4 + len(dim_tail)] = 1.0
    hdr["pixdim"] = pixdim
    hdr["vox_offset"] = 352.0
    hdr["scl_slope"] = 1.0
    hdr["xyzt_units"] = 10  # mm | sec
    hdr["descrip"] = b"glioscribe"
    hdr["sform_code"] = 1
    hdr["qform_code"] = 0
    hdr["srow_x"] = affine[0].astype(np.float32)
    hdr["srow_y"] = affine[1].astype(np.float32)
    hdr["srow_z"] = affine[2].astype(np.float32)
    hdr["magic"] = b"n+1"
    return hdr


def save_nifti(vol, path):
    """Write a Volume / LabelVolume / DisplacementField as single-file NIfTI-1.

    Little-endian, sform only, vox_offset 352. Gzip-compressed when the
    path ends in .gz.
    """
    affine = np.asarray(vol.affine, np.float64)
    pixdim_xyz = np.linalg.norm(affine[:3, :3], axis=0).astype(np.float32)

    if isinstance(vol, DisplacementField):
        data = vol.vectors.astype(np.float32)
        nx, ny, nz = vol.dims
        hdr = _build_header((nx, ny, nz), pixdim_xyz, affine, 16, 5,
                            dim_tail=(1, 3), intent_code=_INTENT_VECTOR,
                            intent_name=b"vector")
        payload = data.reshape(nx, ny, nz, 1, 3).tobytes(order="F")
    else:
        data = vol.data
        if isinstance(vol, LabelVolume):
            data = data.astype(_choose_int_dtype(data))
        elif data.dtype == np.float64:
            pass
        elif data.dtype == np.float32:
            pass
        elif np.issubdtype(data.dtype, np.integer):
            data = data.astype(_choose_int_dtype(data))
        elif data.dtype == bool:
            data = data.astype(np.uint8)
        else:
            data = data.astype(np.float64)
        dt_code = _NUMPY_TO_DT[data.dtype.name]
        hdr = _build_header(vol.dims, pixdim_xyz, affine, dt_code, 3)
        payload = data.tobytes(order="F")

    blob = hdr.tobytes() + b"\x00\x00\x00\x00" + payload
    path = str(path)
    if path.endswith(".gz"):
        blob = gzip.compress(blob, compresslevel=4, mtime=0)
    with open(path, "wb") as fh:
        fh.write(blob)
    return path
