"""Dynamics-based Fisher vectors and appearance features for video person re-id."""
from .evaluation import (DistanceMatrix, cmc, euclidean_distances, min_max_fuse, pur,
                         rank_matches)
from .fisher import (DynFvCodebook, FisherVector, encode_dynfv, fisher_encode, l2_normalize,
                     power_normalize, train_dynfv_codebook)
from .gmm import FitOptions, FitReport, GmmModel, fit_gmm, log_likelihood, responsibilities
from .pooled import Block, PooledFeature, load_feature, save_feature
from .protocol import ProtocolConfig, TrialResult, run_protocol
from .trajectory import (GridSpec, HankelMatrix, PyramidConfig, Tracklet, VelocityTracklet,
                         assign_grids, build_hankel, parse_trajectory_file, pyramid_windows,
                         to_velocities)

__version__ = "0.1.0"
