from .types import (Detection, DetectionSet, FramePair, FrameTriple, GasSample, MicFrame, Scan2D,
                    ENOSE_CHANNELS, uca_radius)
from .lidar import (LidarParams, PointCloudParams, TiltedScannerParams, beam_angles, expected_ground_profile,
                    lidar_pointcloud, lidar_scan, lidar_scan_with, tilted_scan)
from .enose import EnoseParams, enose_sample
from .microphone import MicParams, mic_capture
from .gascam import GasCameraParams, gas_camera_capture, gas_camera_cl, render_triple
from .uvcam import UVCameraParams, uv_capture
from .detections import DetectorParams, detect_objects_sim, detect_objects_with
