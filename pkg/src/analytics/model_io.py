"""
Versioned binary model files.

    magic "PSMD" | u8 version | u8 kind_len | kind
    | u32 meta_len | meta JSON
    | u16 n_arrays | n_arrays x (u8 name_len | name | u8 dtype_len | dtype | u8 ndim | ndim x u32 | u64 nbytes | data)
    | u32 CRC-32 of everything before it

All integers and array data are little-endian.
"""
import json
import logging
import struct
import zlib
from pathlib import Path
from typing import Any, Dict, Tuple

import numpy as np

from .autoencoder import AutoencoderModel
from .features import SpectrumFeatureSpec
from .flow_rate import FlowModel
from .gas_signature import SignatureModel
from .sound_class import SoundClassModel

logger = logging.getLogger(__name__)

MAGIC = b'PSMD'
VERSION = 1
KINDS = ('autoencoder', 'flow', 'signature', 'soundclass')


class ModelFileError(ValueError):
    """Not a model file, wrong kind or version, truncated, or failing its checksum."""


def _pack_arrays(arrays: Dict[str, np.ndarray]) -> bytes:
    out = [struct.pack('<H', len(arrays))]
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr)
        a = a.astype(a.dtype.newbyteorder('<'), copy=False)
        name_b, dtype_b = name.encode('utf-8'), a.dtype.str.encode('ascii')
        data = a.tobytes()
        out.append(struct.pack('<B', len(name_b)) + name_b + struct.pack('<B', len(dtype_b)) + dtype_b
                   + struct.pack('<B', a.ndim) + struct.pack(f'<{a.ndim}I', *a.shape)
                   + struct.pack('<Q', len(data)) + data)
    return b''.join(out)


def encode_model_file(kind: str, meta: Dict[str, Any], arrays: Dict[str, np.ndarray]) -> bytes:
    if kind not in KINDS:
        raise ValueError(f'unknown model kind {kind!r}')
    kind_b = kind.encode('ascii')
    meta_b = json.dumps(meta, sort_keys=True).encode('utf-8')
    body = (MAGIC + struct.pack('<BB', VERSION, len(kind_b)) + kind_b + struct.pack('<I', len(meta_b)) + meta_b
            + _pack_arrays(arrays))
    return body + struct.pack('<I', zlib.crc32(body) & 0xFFFFFFFF)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ModelFileError('model file truncated')
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_model_file(data: bytes) -> Tuple[str, Dict[str, Any], Dict[str, np.ndarray]]:
    if len(data) < 4 + 2 + 4 + 2 + 4:
        raise ModelFileError('model file truncated')
    if data[:4] != MAGIC:
        raise ModelFileError(f'bad magic {data[:4]!r}')
    body, (crc,) = data[:-4], struct.unpack('<I', data[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise ModelFileError('checksum mismatch (corrupt model file)')
    r = _Reader(body)
    r.take(4)
    version, kind_len = r.unpack('<BB')
    if version != VERSION:
        raise ModelFileError(f'unsupported model file version {version}')
    kind = r.take(kind_len).decode('ascii')
    (meta_len,) = r.unpack('<I')
    try:
        meta = json.loads(r.take(meta_len).decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ModelFileError(f'model metadata is not JSON: {e}') from e
    (count,) = r.unpack('<H')
    arrays = {}
    for _ in range(count):
        (name_len,) = r.unpack('<B')
        name = r.take(name_len).decode('utf-8')
        (dtype_len,) = r.unpack('<B')
        dtype = np.dtype(r.take(dtype_len).decode('ascii'))
        (ndim,) = r.unpack('<B')
        shape = r.unpack(f'<{ndim}I') if ndim else ()
        (nbytes,) = r.unpack('<Q')
        if nbytes != int(np.prod(shape, dtype=np.int64)) * dtype.itemsize:
            raise ModelFileError(f'array {name!r} size does not match its shape')
        arrays[name] = np.frombuffer(r.take(nbytes), dtype=dtype).reshape(shape).copy()
    if r.pos != len(body):
        raise ModelFileError('trailing bytes after the last array')
    return kind, meta, arrays


def model_kind(model) -> str:
    if isinstance(model, AutoencoderModel):
        return 'autoencoder'
    if isinstance(model, FlowModel):
        return 'flow'
    if isinstance(model, SignatureModel):
        return 'signature'
    if isinstance(model, SoundClassModel):
        return 'soundclass'
    raise TypeError(f'cannot serialise {type(model).__name__}')


def _to_parts(model) -> Tuple[str, Dict[str, Any], Dict[str, np.ndarray]]:
    kind = model_kind(model)
    if kind == 'autoencoder':
        arrays = {f'w{k}': w for k, w in enumerate(model.weights)}
        arrays.update({f'b{k}': b for k, b in enumerate(model.biases)})
        arrays['feature_mean'] = model.feature_mean
        arrays['feature_std'] = model.feature_std
        arrays['loss_history'] = np.asarray(model.loss_history, dtype=float)
        meta = {'sizes': list(model.sizes), 'threshold': model.threshold,
                'feature_spec': model.feature_spec.as_dict(), 'train': model.meta}
    elif kind == 'flow':
        arrays = {'weights': model.weights, 'feature_mean': model.feature_mean, 'feature_std': model.feature_std}
        meta = {'bias': model.bias, 'plume_threshold': model.plume_threshold, 'alpha': model.alpha,
                'train': model.meta}
    elif kind == 'signature':
        arrays = {'centroids': model.centroids}
        meta = {'labels': list(model.labels), 'ndir_ref': model.ndir_ref, 'ec_ref': model.ec_ref,
                'epsilon': model.epsilon, 'train': model.meta}
    else:
        arrays = {'centroids': model.centroids}
        meta = {'labels': list(model.labels), 'feature_spec': model.feature_spec.as_dict(), 'train': model.meta}
    return kind, meta, arrays


def _from_parts(kind: str, meta: Dict[str, Any], arrays: Dict[str, np.ndarray]):
    try:
        if kind == 'autoencoder':
            sizes = tuple(meta['sizes'])
            n = len(sizes) - 1
            return AutoencoderModel([arrays[f'w{k}'] for k in range(n)], [arrays[f'b{k}'] for k in range(n)],
                                    arrays['feature_mean'], arrays['feature_std'], float(meta['threshold']),
                                    sizes, arrays['loss_history'].tolist(),
                                    SpectrumFeatureSpec(**meta['feature_spec']), meta.get('train', {}))
        if kind == 'flow':
            return FlowModel(arrays['weights'], float(meta['bias']), arrays['feature_mean'], arrays['feature_std'],
                             float(meta['plume_threshold']), float(meta['alpha']), meta.get('train', {}))
        if kind == 'signature':
            return SignatureModel(tuple(meta['labels']), arrays['centroids'], float(meta['ndir_ref']),
                                  float(meta['ec_ref']), float(meta['epsilon']), meta.get('train', {}))
        if kind == 'soundclass':
            return SoundClassModel(tuple(meta['labels']), arrays['centroids'],
                                   SpectrumFeatureSpec(**meta['feature_spec']), meta.get('train', {}))
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFileError(f'{kind} model file is inconsistent: {e}') from e
    raise ModelFileError(f'unknown model kind {kind!r}')


def save_model(model, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    kind, meta, arrays = _to_parts(model)
    path.write_bytes(encode_model_file(kind, meta, arrays))
    logger.info(f'Saved {kind} model to {path}')
    return path


def load_model(path, kind: str = None):
    """Read a model file; ``kind`` (when given) must match the stored kind."""
    path = Path(path)
    if not path.exists():
        raise ModelFileError(f'model file not found: {path}')
    stored, meta, arrays = decode_model_file(path.read_bytes())
    if kind is not None and stored != kind:
        raise ModelFileError(f'{path} holds a {stored} model, expected {kind}')
    return _from_parts(stored, meta, arrays)
