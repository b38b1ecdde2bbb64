//! Explicit networks realizing identities, sums, compositions, compiled
//! fully-connected maps, resampling stages and low-frequency embeddings.

mod embedding;
mod fc;
mod layers;
mod resample;
mod stride;

pub use embedding::{find_collision, unique_embedding, UniqueEmbedding};
pub use fc::{check_positive_domain, fc_to_cnn, recentred, FCNetwork, FcLayer};
pub use layers::{
    bottleneck_witness, compose, conjugate_closure, identity_accounting, identity_layer, identity_network,
    parallel_sum, support_identity_layer, support_identity_network, CompositionAccounting, IdentityAccounting,
    WitnessAccounting,
};
pub use resample::{downsample, downsample_adjoint, is_band_limited, upsample, upsample_literal};
pub use stride::{stride_identity_witness, stride_network, StrideNetwork, StrideSpec};
