//! Surrogate humanoid: PD actuation, base and foot kinematics over a
//! heightfield, domain randomization, sensor latency and termination.

pub mod episode;
pub mod joints;
pub mod latency;
pub mod randomization;
pub mod surrogate;

pub use episode::{base_clearance, check_termination, is_fall, record_fault, EpisodeStats, Progress, TerminationConfig};
pub use joints::{clip_action_for_safety, pd_torque, Joint, JointConfig, JointGroup, ARM_JOINTS, LEG_JOINTS, NUM_JOINTS, WAIST_JOINTS};
pub use latency::{apply_latency, LatencyQueue};
pub use randomization::{sample_domain_randomization, DomainRandomization};
pub use surrogate::{leg_fk, RobotState, StepInfo, Surrogate, SurrogateParams, CONTROL_DT, DECIMATION, SIM_DT};
