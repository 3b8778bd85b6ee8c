//! Packet-trace lines.
//!
//! One line per delivery: `timestamp link src dst kind summary`. Frames
//! dropped on a down link carry a trailing ` [dropped]`. Control-channel
//! traffic uses links named `ctl:<switch>` and kinds `PACKET_IN`,
//! `PACKET_OUT`, `FLOW_MOD`, `PATH_SETUP` and `TEARDOWN`.

use std::fmt;
use std::str::FromStr;

use crate::Tick;

pub const DROPPED: &str = "[dropped]";

/// Every `kind` a trace line can carry.
pub const KINDS: [&str; 8] = [
    "DATA", "HANDSHAKE", "QMETA", "PACKET_IN", "PACKET_OUT", "FLOW_MOD", "PATH_SETUP", "TEARDOWN",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub timestamp: Tick,
    pub link: String,
    pub src: String,
    pub dst: String,
    pub kind: String,
    pub summary: String,
    pub dropped: bool,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {} {}",
            self.timestamp, self.link, self.src, self.dst, self.kind, self.summary
        )?;
        if self.dropped {
            write!(f, " {DROPPED}")?;
        }
        Ok(())
    }
}

impl FromStr for TraceRecord {
    type Err = String;
    fn from_str(line: &str) -> Result<Self, String> {
        let mut parts = line.splitn(6, ' ');
        let mut next = |name: &str| {
            parts
                .next()
                .filter(|s| !s.is_empty())
                .ok_or_else(|| format!("trace line missing {name}: `{line}`"))
        };
        let timestamp = next("timestamp")?
            .parse()
            .map_err(|_| format!("bad timestamp in `{line}`"))?;
        let link = next("link")?.to_string();
        let src = next("src")?.to_string();
        let dst = next("dst")?.to_string();
        let kind = next("kind")?.to_string();
        if !KINDS.contains(&kind.as_str()) {
            return Err(format!("unknown trace kind `{kind}` in `{line}`"));
        }
        let mut summary = next("summary")?.to_string();
        let dropped = summary.ends_with(DROPPED);
        if dropped {
            summary.truncate(summary.len() - DROPPED.len());
            summary = summary.trim_end().to_string();
        }
        Ok(Self {
            timestamp,
            link,
            src,
            dst,
            kind,
            summary,
            dropped,
        })
    }
}
