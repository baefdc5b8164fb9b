//! Recovery metrics, ablation input transforms, the linear reference codec,
//! zero-forcing precoding rates and report files.

mod ablation;
mod baseline;
mod metrics;
mod precode;
mod report;
mod trained;

pub use ablation::{dr_as_inverse, dr_as_transform, dr_mp_inverse, dr_mp_transform, DrAs, DrMp};
pub use baseline::{linear_baseline, retained_rank, LinearCodec};
pub use metrics::{cdf_quantile, nmse_cdf, nmse_db, nmse_linear, per_sample_nmse_db, to_db, NMSE_FLOOR_DB};
pub use precode::{achievable_rate, subband_users, zf_precode, Precoder, RateTable};
pub use report::{emit_report, EvalReport};
pub use trained::TrainedModel;
