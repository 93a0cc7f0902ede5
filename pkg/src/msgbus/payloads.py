"""
Payload codec shared by every topic.

    u32 meta_len | meta_len bytes of JSON | array blobs

The JSON object has ``meta`` (message fields) and ``arrays`` (name, dtype,
shape of each blob, in order). Blobs are little-endian, C order. Floats in
JSON round-trip exactly, so decoded messages are bit-identical.
"""
import json
import struct
from typing import Any, Dict, Mapping, Optional, Tuple

import numpy as np

from simworld.types import OccupancyGrid, Pose2D
from sensors.types import (Detection, DetectionSet, FramePair, FrameTriple, GasSample, MicFrame, Scan2D)
from .envelope import ProtocolError

_LEN = struct.Struct('<I')


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    raise TypeError(f'{type(obj).__name__} is not JSON serializable')


def pack_payload(meta: Mapping[str, Any], arrays: Optional[Mapping[str, np.ndarray]] = None) -> bytes:
    arrays = arrays or {}
    specs, blobs = [], []
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr)
        a = a.astype(a.dtype.newbyteorder('<'), copy=False)
        specs.append({'name': name, 'dtype': a.dtype.str, 'shape': list(a.shape)})
        blobs.append(a.tobytes())
    head = json.dumps({'meta': dict(meta), 'arrays': specs}, sort_keys=True, separators=(',', ':'),
                      default=_json_default).encode('utf-8')
    return _LEN.pack(len(head)) + head + b''.join(blobs)


def unpack_payload(data: bytes) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    if len(data) < _LEN.size:
        raise ProtocolError('payload shorter than its length prefix')
    (n,) = _LEN.unpack_from(data, 0)
    if _LEN.size + n > len(data):
        raise ProtocolError('payload metadata truncated')
    try:
        head = json.loads(data[_LEN.size:_LEN.size + n].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ProtocolError(f'payload metadata is not JSON: {e}') from e
    offset = _LEN.size + n
    arrays = {}
    for spec in head.get('arrays', []):
        dtype = np.dtype(spec['dtype'])
        count = int(np.prod(spec['shape'])) if spec['shape'] else 1
        size = count * dtype.itemsize
        if offset + size > len(data):
            raise ProtocolError(f'array {spec["name"]!r} truncated')
        arrays[spec['name']] = np.frombuffer(data, dtype=dtype, count=count, offset=offset).reshape(spec['shape']).copy()
        offset += size
    return head.get('meta', {}), arrays


def pose_meta(pose: Pose2D) -> list:
    return [pose.x, pose.y, pose.theta]


def pose_from(values) -> Pose2D:
    return Pose2D(*values)


# sensors/lidar

def encode_scan(scan: Scan2D, **extra) -> bytes:
    return pack_payload({'stamp': scan.stamp, 'max_range': scan.max_range, **extra},
                        {'angles': scan.angles, 'ranges': scan.ranges})


def decode_scan(data: bytes) -> Tuple[Scan2D, Dict[str, Any]]:
    meta, arrays = unpack_payload(data)
    return Scan2D(arrays['angles'], arrays['ranges'], meta['stamp'], meta['max_range']), meta


# sensors/enose

def encode_gas_samples(samples, **extra) -> bytes:
    rows = [[s.stamp, *s.mox, s.ndir_co2, s.electrochemical, s.humidity, *s.wind] for s in samples]
    return pack_payload(extra, {'samples': np.array(rows, dtype=float).reshape(-1, 9)})


def decode_gas_samples(data: bytes):
    meta, arrays = unpack_payload(data)
    samples = [GasSample(stamp=r[0], mox=(r[1], r[2], r[3]), ndir_co2=r[4], electrochemical=r[5], humidity=r[6],
                         wind=(r[7], r[8])) for r in arrays['samples'].tolist()]
    return samples, meta


# sensors/mic

def encode_mic_frame(frame: MicFrame, **extra) -> bytes:
    return pack_payload({'fs': frame.fs, 'stamp': frame.stamp, 'radius': frame.radius, **extra},
                        {'channels': frame.channels, 'mic_angles': frame.mic_angles})


def decode_mic_frame(data: bytes) -> Tuple[MicFrame, Dict[str, Any]]:
    meta, arrays = unpack_payload(data)
    return MicFrame(meta['fs'], arrays['channels'], meta['stamp'], meta['radius'], arrays['mic_angles']), meta


# sensors/gascam

def encode_frame_triples(triples, **extra) -> bytes:
    arrays = {}
    for i, tr in enumerate(triples):
        arrays[f'{i}/wing_minus'] = tr.wing_minus
        arrays[f'{i}/center'] = tr.center
        arrays[f'{i}/wing_plus'] = tr.wing_plus
    first = triples[0] if triples else None
    meta = {'count': len(triples), 'stamps': [t.stamp for t in triples],
            'poses': [pose_meta(t.pose) for t in triples],
            'delta_alpha': first.delta_alpha if first else None, **extra}
    if first is not None:
        arrays['azimuths'] = first.azimuths
        arrays['elevations'] = first.elevations
    return pack_payload(meta, arrays)


def decode_frame_triples(data: bytes):
    meta, arrays = unpack_payload(data)
    triples = [FrameTriple(arrays[f'{i}/wing_minus'], arrays[f'{i}/center'], arrays[f'{i}/wing_plus'],
                           arrays['azimuths'], arrays['elevations'], meta['stamps'][i],
                           pose_from(meta['poses'][i]), meta['delta_alpha'])
               for i in range(meta['count'])]
    return triples, meta


# sensors/uv

def encode_frame_pair(pair: FramePair, **extra) -> bytes:
    return pack_payload({'stamp': pair.stamp, 'ambient_level': pair.ambient_level, 'pose': pose_meta(pair.pose),
                         **extra},
                        {'ambient': pair.ambient, 'uv': pair.uv, 'ranges': pair.ranges, 'azimuths': pair.azimuths})


def decode_frame_pair(data: bytes) -> Tuple[FramePair, Dict[str, Any]]:
    meta, a = unpack_payload(data)
    return FramePair(a['ambient'], a['uv'], meta['stamp'], meta['ambient_level'], pose_from(meta['pose']),
                     a['ranges'], a['azimuths']), meta


# sensors/detections

def encode_detections(dets: DetectionSet, **extra) -> bytes:
    return pack_payload({'stamp': dets.stamp,
                         'pose': pose_meta(dets.pose) if dets.pose else None,
                         'detections': [[d.cls, d.bearing, d.range, d.footprint_radius, d.confidence]
                                        for d in dets.detections], **extra})


def decode_detections(data: bytes) -> Tuple[DetectionSet, Dict[str, Any]]:
    meta, _ = unpack_payload(data)
    dets = tuple(Detection(c, b, r, f, conf) for c, b, r, f, conf in meta['detections'])
    pose = pose_from(meta['pose']) if meta.get('pose') else None
    return DetectionSet(meta['stamp'], dets, pose), meta


# nav/map

def encode_grid(grid: OccupancyGrid, **extra) -> bytes:
    return pack_payload({'resolution': grid.resolution, 'origin': pose_meta(grid.origin), **extra},
                        {'logodds': grid.logodds, 'ground_depth': grid.ground_depth})


def decode_grid(data: bytes) -> Tuple[OccupancyGrid, Dict[str, Any]]:
    meta, a = unpack_payload(data)
    return OccupancyGrid(meta['resolution'], a['logodds'], pose_from(meta['origin']), a['ground_depth']), meta


# JSON-only messages (nav/pose, nav/path, mission/*, analytics/*)

def encode_json(meta: Mapping[str, Any]) -> bytes:
    return pack_payload(meta)


def decode_json(data: bytes) -> Dict[str, Any]:
    return unpack_payload(data)[0]
