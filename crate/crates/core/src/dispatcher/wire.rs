//! Dispatcher wire protocol.
//!
//! Each message is a 4-byte big-endian length followed by that many bytes of
//! UTF-8 text. The text is a list of `key=value` lines in a fixed order.
//! Keys use `[A-Za-z0-9._-]`; values escape `\` as `\\`, newline as `\n` and
//! carriage return as `\r`. Nested data flattens into dotted keys, lists use
//! numeric segments plus a `.len` entry.
//!
//! Request: `version`, `request-id`, `method`, then `params.*`.
//! Response: `request-id`, `status` (`ok` | `error`), then `result.*` or
//! `error.code` / `error.message`.

use std::io::{self, Read, Write};
use std::str::FromStr;

use super::{
    ChannelConfig, ChannelRecord, DispatcherConfig, DispatcherError, Event, QubitId, QubitRef,
};
use crate::noise::{MemoryModel, PauliChannelParams};

pub const PROTOCOL_VERSION: u32 = 1;
pub const MAX_FRAME: usize = 16 << 20;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KvMessage {
    fields: Vec<(String, String)>,
}

fn escape(v: &str) -> String {
    let mut out = String::with_capacity(v.len());
    for c in v.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(v: &str) -> Result<String, String> {
    let mut out = String::with_capacity(v.len());
    let mut it = v.chars();
    while let Some(c) = it.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match it.next() {
            Some('\\') => out.push('\\'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => return Err(format!("bad escape `\\{}`", other.unwrap_or(' '))),
        }
    }
    Ok(out)
}

fn valid_key(k: &str) -> bool {
    !k.is_empty()
        && k
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-'))
}

impl KvMessage {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        let key = key.into();
        debug_assert!(valid_key(&key), "invalid key {key}");
        self.fields.push((key, value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str, DispatcherError> {
        self.get(key)
            .ok_or_else(|| DispatcherError::BadRequest(format!("missing field `{key}`")))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T, DispatcherError> {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|_| DispatcherError::BadRequest(format!("field `{key}`: cannot parse `{raw}`")))
    }

    pub fn fields(&self) -> &[(String, String)] {
        &self.fields
    }

    /// Entries under `prefix.`, with the prefix stripped.
    pub fn section(&self, prefix: &str) -> KvMessage {
        let p = format!("{prefix}.");
        KvMessage {
            fields: self
                .fields
                .iter()
                .filter_map(|(k, v)| k.strip_prefix(&p).map(|s| (s.to_string(), v.clone())))
                .collect(),
        }
    }

    /// Copies every field of `other` under `prefix.`.
    pub fn nest(&mut self, prefix: &str, other: &KvMessage) -> &mut Self {
        for (k, v) in &other.fields {
            self.fields.push((format!("{prefix}.{k}"), v.clone()));
        }
        self
    }

    pub fn encode(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.fields {
            out.push_str(k);
            out.push('=');
            out.push_str(&escape(v));
            out.push('\n');
        }
        out
    }

    pub fn decode(text: &str) -> Result<Self, DispatcherError> {
        let mut fields = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                DispatcherError::BadRequest(format!("line {}: expected key=value", i + 1))
            })?;
            if !valid_key(k) {
                return Err(DispatcherError::BadRequest(format!(
                    "line {}: invalid key `{k}`",
                    i + 1
                )));
            }
            let v = unescape(v)
                .map_err(|e| DispatcherError::BadRequest(format!("line {}: {e}", i + 1)))?;
            fields.push((k.to_string(), v));
        }
        Ok(Self { fields })
    }
}

pub fn write_frame<W: Write>(w: &mut W, body: &[u8]) -> io::Result<()> {
    if body.len() > MAX_FRAME {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "frame too large"));
    }
    w.write_all(&(body.len() as u32).to_be_bytes())?;
    w.write_all(body)?;
    w.flush()
}

/// Reads one frame; `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "frame too large"));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    Ok(Some(body))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    pub version: u32,
    pub id: u64,
    pub method: String,
    pub params: KvMessage,
}

impl Request {
    pub fn new(id: u64, method: &str, params: KvMessage) -> Self {
        Self {
            version: PROTOCOL_VERSION,
            id,
            method: method.into(),
            params,
        }
    }

    pub fn to_message(&self) -> KvMessage {
        let mut m = KvMessage::new();
        m.put("version", self.version)
            .put("request-id", self.id)
            .put("method", &self.method)
            .nest("params", &self.params);
        m
    }

    pub fn from_message(m: &KvMessage) -> Result<Self, DispatcherError> {
        Ok(Self {
            version: m.parse("version")?,
            id: m.parse("request-id")?,
            method: m.require("method")?.to_string(),
            params: m.section("params"),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub id: u64,
    pub outcome: Result<KvMessage, WireError>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireError {
    pub code: String,
    pub message: String,
}

impl From<&DispatcherError> for WireError {
    fn from(e: &DispatcherError) -> Self {
        let message = match e {
            DispatcherError::DuplicateNode(s)
            | DispatcherError::UnknownNode(s)
            | DispatcherError::UnknownChannel(s)
            | DispatcherError::NotOwner(s)
            | DispatcherError::BadRequest(s)
            | DispatcherError::Transport(s)
            | DispatcherError::Simulation(s) => s.clone(),
            DispatcherError::UnknownSession(n)
            | DispatcherError::UnknownQubit(n)
            | DispatcherError::DeadQubit(n) => n.to_string(),
            DispatcherError::DepthExceeded { requested, depth } => format!("{requested}/{depth}"),
            DispatcherError::NotConfigured => String::new(),
        };
        WireError {
            code: e.code().into(),
            message,
        }
    }
}

impl WireError {
    pub fn into_error(self) -> DispatcherError {
        let num = || self.message.parse().unwrap_or(0);
        match self.code.as_str() {
            "DuplicateNode" => DispatcherError::DuplicateNode(self.message),
            "UnknownNode" => DispatcherError::UnknownNode(self.message),
            "UnknownChannel" => DispatcherError::UnknownChannel(self.message),
            "NotOwner" => DispatcherError::NotOwner(self.message),
            "BadRequest" => DispatcherError::BadRequest(self.message),
            "Simulation" => DispatcherError::Simulation(self.message),
            "UnknownSession" => DispatcherError::UnknownSession(num()),
            "UnknownQubit" => DispatcherError::UnknownQubit(num()),
            "DeadQubit" => DispatcherError::DeadQubit(num()),
            "DepthExceeded" => {
                let (r, d) = self.message.split_once('/').unwrap_or(("0", "0"));
                DispatcherError::DepthExceeded {
                    requested: r.parse().unwrap_or(0),
                    depth: d.parse().unwrap_or(0),
                }
            }
            "NotConfigured" => DispatcherError::NotConfigured,
            _ => DispatcherError::Transport(format!("{}: {}", self.code, self.message)),
        }
    }
}

impl Response {
    pub fn to_message(&self) -> KvMessage {
        let mut m = KvMessage::new();
        m.put("request-id", self.id);
        match &self.outcome {
            Ok(result) => {
                m.put("status", "ok").nest("result", result);
            }
            Err(e) => {
                m.put("status", "error")
                    .put("error.code", &e.code)
                    .put("error.message", &e.message);
            }
        }
        m
    }

    pub fn from_message(m: &KvMessage) -> Result<Self, DispatcherError> {
        let id = m.parse("request-id")?;
        let outcome = match m.require("status")? {
            "ok" => Ok(m.section("result")),
            "error" => Err(WireError {
                code: m.require("error.code")?.to_string(),
                message: m.get("error.message").unwrap_or("").to_string(),
            }),
            s => return Err(DispatcherError::BadRequest(format!("bad status `{s}`"))),
        };
        Ok(Self { id, outcome })
    }
}

pub fn send_message<W: Write>(w: &mut W, m: &KvMessage) -> io::Result<()> {
    write_frame(w, m.encode().as_bytes())
}

pub fn recv_message<R: Read>(r: &mut R) -> io::Result<Option<Result<KvMessage, DispatcherError>>> {
    Ok(read_frame(r)?.map(|body| match String::from_utf8(body) {
        Ok(text) => KvMessage::decode(&text),
        Err(_) => Err(DispatcherError::BadRequest("frame is not UTF-8".into())),
    }))
}

pub fn put_qubit_ref(m: &mut KvMessage, prefix: &str, q: &QubitRef) {
    m.put(format!("{prefix}.id"), q.id.0)
        .put(format!("{prefix}.owner"), &q.owner)
        .put(format!("{prefix}.alive"), q.alive);
}

pub fn get_qubit_ref(m: &KvMessage, prefix: &str) -> Result<QubitRef, DispatcherError> {
    Ok(QubitRef {
        id: QubitId(m.parse(&format!("{prefix}.id"))?),
        owner: m.require(&format!("{prefix}.owner"))?.to_string(),
        alive: m.parse(&format!("{prefix}.alive"))?,
    })
}

pub fn put_records(m: &mut KvMessage, records: &[ChannelRecord]) {
    m.put("records.len", records.len());
    for (i, r) in records.iter().enumerate() {
        let p = format!("records.{i}");
        m.put(format!("{p}.timestamp"), r.timestamp)
            .put(format!("{p}.qubit"), r.qubit.0)
            .put(
                format!("{p}.error"),
                r.applied_error.map_or("-", |e| e.as_str()),
            )
            .put(format!("{p}.from"), &r.from)
            .put(format!("{p}.to"), &r.to);
    }
}

pub fn get_records(m: &KvMessage) -> Result<Vec<ChannelRecord>, DispatcherError> {
    let n: usize = m.parse("records.len")?;
    (0..n)
        .map(|i| {
            let p = format!("records.{i}");
            let error = m.require(&format!("{p}.error"))?;
            Ok(ChannelRecord {
                timestamp: m.parse(&format!("{p}.timestamp"))?,
                qubit: QubitId(m.parse(&format!("{p}.qubit"))?),
                applied_error: if error == "-" {
                    None
                } else {
                    Some(error.parse().map_err(DispatcherError::BadRequest)?)
                },
                from: m.require(&format!("{p}.from"))?.to_string(),
                to: m.require(&format!("{p}.to"))?.to_string(),
            })
        })
        .collect()
}

pub fn put_events(m: &mut KvMessage, events: &[Event]) {
    m.put("events.len", events.len());
    for (i, e) in events.iter().enumerate() {
        m.put(format!("events.{i}"), e);
    }
}

pub fn get_events(m: &KvMessage) -> Result<Vec<Event>, DispatcherError> {
    let n: usize = m.parse("events.len")?;
    (0..n)
        .map(|i| {
            m.require(&format!("events.{i}"))?
                .parse()
                .map_err(DispatcherError::BadRequest)
        })
        .collect()
}

pub fn put_config(m: &mut KvMessage, c: &DispatcherConfig) {
    m.put("seed", c.seed)
        .put("op-tick", c.op_tick)
        .put("channels.len", c.channels.len());
    for (i, ch) in c.channels.iter().enumerate() {
        let p = format!("channels.{i}");
        m.put(format!("{p}.id"), &ch.id)
            .put(format!("{p}.a"), &ch.a)
            .put(format!("{p}.b"), &ch.b)
            .put(format!("{p}.p-x"), ch.base_noise.p_x)
            .put(format!("{p}.p-y"), ch.base_noise.p_y)
            .put(format!("{p}.p-z"), ch.base_noise.p_z)
            .put(format!("{p}.p-loss"), ch.base_noise.p_loss)
            .put(format!("{p}.window"), ch.memory.window)
            .put(format!("{p}.load-factor"), ch.memory.load_factor)
            .put(format!("{p}.cap"), ch.memory.cap)
            .put(format!("{p}.depth"), ch.depth)
            .put(format!("{p}.latency"), ch.latency);
    }
}

pub fn get_config(m: &KvMessage) -> Result<DispatcherConfig, DispatcherError> {
    let n: usize = m.parse("channels.len")?;
    let channels = (0..n)
        .map(|i| {
            let f = |k: &str| format!("channels.{i}.{k}");
            Ok(ChannelConfig {
                id: m.require(&f("id"))?.to_string(),
                a: m.require(&f("a"))?.to_string(),
                b: m.require(&f("b"))?.to_string(),
                base_noise: PauliChannelParams {
                    p_x: m.parse(&f("p-x"))?,
                    p_y: m.parse(&f("p-y"))?,
                    p_z: m.parse(&f("p-z"))?,
                    p_loss: m.parse(&f("p-loss"))?,
                },
                memory: MemoryModel {
                    window: m.parse(&f("window"))?,
                    load_factor: m.parse(&f("load-factor"))?,
                    cap: m.parse(&f("cap"))?,
                },
                depth: m.parse(&f("depth"))?,
                latency: m.parse(&f("latency"))?,
            })
        })
        .collect::<Result<_, DispatcherError>>()?;
    Ok(DispatcherConfig {
        seed: m.parse("seed")?,
        op_tick: m.parse("op-tick")?,
        channels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn request_layout() {
        let mut p = KvMessage::new();
        p.put("session", 3).put("qubit", 9);
        let req = Request::new(17, "transmit", p);
        assert_eq!(
            req.to_message().encode(),
            "version=1\nrequest-id=17\nmethod=transmit\nparams.session=3\nparams.qubit=9\n"
        );
        let back = Request::from_message(&KvMessage::decode(&req.to_message().encode()).unwrap());
        assert_eq!(back.unwrap(), req);
    }

    #[test]
    fn error_response_round_trip() {
        let err = DispatcherError::DepthExceeded {
            requested: 9,
            depth: 4,
        };
        let resp = Response {
            id: 2,
            outcome: Err(WireError::from(&err)),
        };
        let back = Response::from_message(&resp.to_message()).unwrap();
        assert_eq!(back.outcome.unwrap_err().into_error(), err);
    }

    #[test]
    fn framing() {
        let mut buf = Vec::new();
        write_frame(&mut buf, b"abc").unwrap();
        write_frame(&mut buf, b"").unwrap();
        assert_eq!(&buf[..4], &[0, 0, 0, 3]);
        let mut r = &buf[..];
        assert_eq!(read_frame(&mut r).unwrap().unwrap(), b"abc");
        assert_eq!(read_frame(&mut r).unwrap().unwrap(), b"");
        assert_eq!(read_frame(&mut r).unwrap(), None);
    }

    #[test]
    fn config_round_trip() {
        let mut ch = ChannelConfig::noiseless("q-a", "alice", "qs1").with_noise(PauliChannelParams {
            p_x: 0.1,
            p_y: 1.0 / 3.0,
            p_z: 0.0,
            p_loss: 0.05,
        });
        ch.memory = MemoryModel {
            window: 5,
            load_factor: 1.5,
            cap: 4.0,
        };
        let cfg = DispatcherConfig {
            seed: 42,
            op_tick: 2,
            channels: vec![ch],
        };
        let mut m = KvMessage::new();
        put_config(&mut m, &cfg);
        let decoded = KvMessage::decode(&m.encode()).unwrap();
        assert_eq!(get_config(&decoded).unwrap(), cfg);
    }

    #[test]
    fn rejects_garbage() {
        assert!(KvMessage::decode("novalue").is_err());
        assert!(KvMessage::decode("bad key=1").is_err());
        assert!(KvMessage::decode("k=\\q").is_err());
    }

    proptest! {
        #[test]
        fn values_survive_escaping(
            entries in prop::collection::vec(("[a-z][a-z0-9._-]{0,8}", any::<String>()), 0..8)
        ) {
            let mut m = KvMessage::new();
            for (k, v) in &entries {
                m.put(k.clone(), v);
            }
            let decoded = KvMessage::decode(&m.encode()).unwrap();
            prop_assert_eq!(decoded, m);
        }
    }
}
