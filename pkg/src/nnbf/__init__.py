"""Uplink MU-SIMO receive beamforming: NNBF, zero forcing and MMSE."""

from .beamform import (
    BeamformerSet,
    batch_sum_rate,
    mmse,
    normalize_receive_power,
    sinr_per_ue,
    sum_rate,
    uniform_rate_weights,
    zfbf,
)
from .channel import (
    ChannelBatch,
    DelayProfile,
    SystemDims,
    generate_batch,
    generate_dataset,
    load_dataset,
    noise_variance,
    save_dataset,
    tdl_a,
    toy_profile,
)
from .network import NnbfNetwork, build_network, forward_beamformer, nnbf_loss
from .training import (
    PlateauScheduler,
    TrainConfig,
    TrainHistory,
    evaluate_sum_rate,
    lr_schedule_step,
    snr_grid,
    sweep,
    train,
)

__version__ = "0.1.0"
