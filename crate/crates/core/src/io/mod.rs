//! On-disk formats: point-cloud text, scene files and channel exports.

mod channel;
mod points;
mod scene;

pub use channel::{read_channel, write_channel, ChannelFile, HopRecord, PathRecord, CHANNEL_SCHEMA};
pub use points::{parse_points, read_points, write_points, POINTS_MAGIC};
pub use scene::{SceneFile, LoadedScene};
