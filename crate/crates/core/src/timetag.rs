//! Multi-channel time-tag streams and the CTAG binary container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "CTAG" | version: u16 | channel count: u8 | metadata length: u32 | metadata (UTF-8 JSON)
//! then, until EOF, records of  channel: u8 | timestamp: f64 seconds
//! ```
//!
//! Records are in global time order; ties across channels are ordered by
//! channel index.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::apparatus::PhysicsModel;
use crate::experiment::RunConfig;

pub const MAGIC: &[u8; 4] = b"CTAG";
pub const FORMAT_VERSION: u16 = 1;
pub const CHANNELS: usize = 3;
const RECORD_LEN: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Channel {
    D0,
    D1,
    D2,
}

impl Channel {
    pub const ALL: [Channel; CHANNELS] = [Channel::D0, Channel::D1, Channel::D2];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: u8) -> Option<Self> {
        Self::ALL.get(index as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::D0 => "D0",
            Channel::D1 => "D1",
            Channel::D2 => "D2",
        }
    }
}

/// A single time tag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub channel: Channel,
    pub timestamp: f64,
}

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("bad magic: expected \"CTAG\"")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("unsupported channel count {0}")]
    ChannelCount(u8),
    #[error("truncated stream")]
    Truncated,
    #[error("ordering violation on {channel:?} at event {index}")]
    OrderingViolation { channel: Channel, index: usize },
    #[error("invalid timestamp {value} on {channel:?}")]
    InvalidTimestamp { channel: Channel, value: f64 },
    #[error("unknown channel id {0}")]
    BadChannel(u8),
    #[error("metadata: {0}")]
    Metadata(#[from] serde_json::Error),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
}

/// Everything needed to reproduce or re-analyze a run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunMetadata {
    pub seed: Option<u64>,
    pub physics_model: Option<PhysicsModel>,
    pub run_duration: Option<f64>,
    pub run_config: Option<RunConfig>,
    /// Spacing between adjacent representable timestamps at the latest event.
    pub time_resolution: f64,
    /// Number of timestamps nudged upward to keep a channel strictly sorted.
    pub tie_breaks: u64,
    /// Largest such nudge, in seconds.
    pub tie_jitter: f64,
}

/// Per-channel strictly increasing timestamps plus run metadata.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventStreams {
    channels: [Vec<f64>; CHANNELS],
    pub metadata: RunMetadata,
}

impl EventStreams {
    /// Wraps already sorted channels, rejecting anything out of order.
    pub fn new(channels: [Vec<f64>; CHANNELS], metadata: RunMetadata) -> Result<Self, StreamError> {
        let mut streams = Self { channels, metadata };
        streams.validate()?;
        streams.metadata.time_resolution = streams.resolution();
        Ok(streams)
    }

    /// Sorts each channel and separates exact ties by one ulp.
    pub fn from_unsorted(
        mut channels: [Vec<f64>; CHANNELS],
        mut metadata: RunMetadata,
    ) -> Result<Self, StreamError> {
        for (ch, times) in Channel::ALL.iter().zip(channels.iter_mut()) {
            if let Some(&value) = times.iter().find(|t| !t.is_finite() || **t < 0.0) {
                return Err(StreamError::InvalidTimestamp { channel: *ch, value });
            }
            times.sort_by(f64::total_cmp);
            let (breaks, jitter) = break_ties(times);
            metadata.tie_breaks += breaks;
            metadata.tie_jitter = metadata.tie_jitter.max(jitter);
        }
        Self::new(channels, metadata)
    }

    pub fn channel(&self, channel: Channel) -> &[f64] {
        &self.channels[channel.index()]
    }

    pub fn channels(&self) -> &[Vec<f64>; CHANNELS] {
        &self.channels
    }

    pub fn counts(&self) -> [usize; CHANNELS] {
        [self.channels[0].len(), self.channels[1].len(), self.channels[2].len()]
    }

    pub fn total_events(&self) -> usize {
        self.channels.iter().map(Vec::len).sum()
    }

    pub fn latest(&self) -> Option<f64> {
        self.channels
            .iter()
            .filter_map(|c| c.last().copied())
            .max_by(f64::total_cmp)
    }

    fn resolution(&self) -> f64 {
        let t = self.latest().unwrap_or(0.0);
        t.next_up() - t
    }

    pub fn validate(&self) -> Result<(), StreamError> {
        for (ch, times) in Channel::ALL.iter().zip(self.channels.iter()) {
            for (i, &t) in times.iter().enumerate() {
                if !t.is_finite() || t < 0.0 {
                    return Err(StreamError::InvalidTimestamp { channel: *ch, value: t });
                }
                if i > 0 && t <= times[i - 1] {
                    return Err(StreamError::OrderingViolation { channel: *ch, index: i });
                }
            }
        }
        Ok(())
    }

    /// All events in global time order, ties broken by channel.
    pub fn merged(&self) -> Vec<DetectionEvent> {
        let mut cursor = [0usize; CHANNELS];
        let mut out = Vec::with_capacity(self.total_events());
        loop {
            let mut next: Option<(usize, f64)> = None;
            for (c, times) in self.channels.iter().enumerate() {
                if let Some(&t) = times.get(cursor[c]) {
                    if next.is_none_or(|(_, best)| t < best) {
                        next = Some((c, t));
                    }
                }
            }
            let Some((c, timestamp)) = next else { break };
            cursor[c] += 1;
            out.push(DetectionEvent {
                channel: Channel::ALL[c],
                timestamp,
            });
        }
        out
    }
}

fn break_ties(times: &mut [f64]) -> (u64, f64) {
    let mut breaks = 0;
    let mut jitter: f64 = 0.0;
    for i in 1..times.len() {
        if times[i] <= times[i - 1] {
            let original = times[i];
            times[i] = times[i - 1].next_up();
            breaks += 1;
            jitter = jitter.max(times[i] - original);
        }
    }
    (breaks, jitter)
}

/// Serializes `streams` in CTAG format.
pub fn write_stream<W: Write>(streams: &EventStreams, out: &mut W) -> Result<(), StreamError> {
    streams.validate()?;
    let metadata = serde_json::to_vec(&streams.metadata)?;
    let metadata_len = u32::try_from(metadata.len())
        .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "metadata exceeds 4 GiB"))?;
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&[CHANNELS as u8])?;
    out.write_all(&metadata_len.to_le_bytes())?;
    out.write_all(&metadata)?;
    let mut record = [0u8; RECORD_LEN];
    for event in streams.merged() {
        record[0] = event.channel.index() as u8;
        record[1..].copy_from_slice(&event.timestamp.to_le_bytes());
        out.write_all(&record)?;
    }
    Ok(())
}

pub fn encode(streams: &EventStreams) -> Result<Vec<u8>, StreamError> {
    let mut buf = Vec::with_capacity(64 + streams.total_events() * RECORD_LEN);
    write_stream(streams, &mut buf)?;
    Ok(buf)
}

fn read_exact_or_truncated<R: Read>(input: &mut R, buf: &mut [u8]) -> Result<(), StreamError> {
    input.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => StreamError::Truncated,
        _ => StreamError::Io(e),
    })
}

/// Parses a CTAG stream.
pub fn read_stream<R: Read>(input: &mut R) -> Result<EventStreams, StreamError> {
    let mut magic = [0u8; 4];
    read_exact_or_truncated(input, &mut magic)?;
    if &magic != MAGIC {
        return Err(StreamError::BadMagic);
    }
    let mut version = [0u8; 2];
    read_exact_or_truncated(input, &mut version)?;
    let version = u16::from_le_bytes(version);
    if version != FORMAT_VERSION {
        return Err(StreamError::UnsupportedVersion(version));
    }
    let mut count = [0u8; 1];
    read_exact_or_truncated(input, &mut count)?;
    if count[0] as usize != CHANNELS {
        return Err(StreamError::ChannelCount(count[0]));
    }
    let mut len = [0u8; 4];
    read_exact_or_truncated(input, &mut len)?;
    let mut metadata = vec![0u8; u32::from_le_bytes(len) as usize];
    read_exact_or_truncated(input, &mut metadata)?;
    let metadata: RunMetadata = serde_json::from_slice(&metadata)?;

    let mut body = Vec::new();
    input.read_to_end(&mut body)?;
    if body.len() % RECORD_LEN != 0 {
        return Err(StreamError::Truncated);
    }

    let mut channels: [Vec<f64>; CHANNELS] = Default::default();
    let mut previous = f64::NEG_INFINITY;
    for record in body.chunks_exact(RECORD_LEN) {
        let channel = Channel::from_index(record[0]).ok_or(StreamError::BadChannel(record[0]))?;
        let t = f64::from_le_bytes(record[1..].try_into().expect("8 bytes"));
        if !t.is_finite() || t < 0.0 {
            return Err(StreamError::InvalidTimestamp { channel, value: t });
        }
        let times = &mut channels[channel.index()];
        if t < previous || times.last().is_some_and(|&last| t <= last) {
            return Err(StreamError::OrderingViolation {
                channel,
                index: times.len(),
            });
        }
        previous = t;
        times.push(t);
    }
    let resolution = metadata.time_resolution;
    let mut streams = EventStreams::new(channels, metadata)?;
    // keep the recorded value so a round trip is lossless
    if resolution > 0.0 {
        streams.metadata.time_resolution = resolution;
    }
    Ok(streams)
}

pub fn decode(mut bytes: &[u8]) -> Result<EventStreams, StreamError> {
    read_stream(&mut bytes)
}

/// Plain `channel,timestamp` export in global time order.
pub fn write_csv<W: Write>(streams: &EventStreams, out: &mut W) -> io::Result<()> {
    writeln!(out, "channel,timestamp")?;
    for event in streams.merged() {
        writeln!(out, "{},{}", event.channel.name(), event.timestamp)?;
    }
    Ok(())
}
