from .builders import build_branch_net, build_ffd_net, build_locnet, conv_filters, trunk_length
from .fusion import fuse, fuse_backward, fused_channels, fusion_output_channels
from .trident import (
    STREAMS, TridentModel, assemble_poseidon, branch_digests, predict_pose, trident_backward, trident_forward,
    trident_params,
)
from .training import (
    NumericError, TrainTrace, predict_head_center, reconstruct_face, train_branch, train_ffd, train_locnet,
    train_poseidon, train_shoulder_net,
)
