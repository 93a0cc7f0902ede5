from .features import SpectrumFeatureSpec, spectrum_features
from .doa import DoaParams, DoaResult, aliasing_limit, doa_estimate
from .autoencoder import AutoencoderModel, TrainParams, TrainingDiverged, roc_auc, sound_anomaly_score, train_autoencoder
from .sound_class import SOUND_CLASSES, SoundClassModel, classify_sound_source, train_sound_classifier
from .gas_signature import SIGNATURE_CLASSES, SignatureModel, classify_gas_signature, train_signature_model
from .gas_imaging import GasImage, concentration_length
from .flow_rate import FlowModel, estimate_flow_rate, flow_features, train_flow_model
from .oil import OilRegion, detect_oil
from .map_diff import APPEARED, DISAPPEARED, ChangeRegion, diff_maps
from .model_io import ModelFileError, load_model, save_model
