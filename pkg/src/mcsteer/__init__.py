"""Monte-Carlo dropout steering networks with uncertainty-weighted shared control.

The package trains a small convolutional network to regress inverse turning
radius from synthetic road frames, reads out predictive uncertainty by
sampling the dropout posterior at inference time, and uses that uncertainty
to arbitrate between the network and a human command in a closed-loop
simulator and a live websocket service.
"""

__version__ = "0.1.0"

from .autodiff import ComputationTape, Parameter, Tensor
from .control import (ClosedLoopResult, FusionConfig, SimConfig, SimulationSession,
                      VehicleState, cross_track_error, fuse, make_human_source,
                      run_closed_loop, vehicle_step)
from .dataset import Dataset, DatasetConfig, build_dataset, load_dataset, save_dataset, \
    split_dataset
from .dropout import (DropoutKind, DropoutMask, DropoutSpec, apply_dropout,
                      sample_elementwise_mask, sample_spatial_mask, tied_elementwise_mask)
from .errors import (ConfigError, DataFormatError, McsteerError, NumericError,
                     ShapeError, TapeError)
from .network import (LabelScaler, Network, NetworkConfig, Stochastic, TrainConfig,
                      TrainLog, build_network, load_network, save_network, train,
                      train_paired)
from .rendering import ImageConfig, render_frame, render_view
from .seeding import derive_seed
from .tracks import Segment, Track, TrackConfig, generate_track
from .uncertainty import (BinnedReport, McConfig, McEstimate, binned_statistics,
                          estimate, mc_sample, mean_uncertainty_error,
                          predictive_mean, predictive_variance)
