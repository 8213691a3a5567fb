//! Line grammar shared by the TCP and WebSocket endpoints.
//!
//! Every message is one UTF-8 line of space-separated fields. Numbers are
//! written in Rust's shortest round-trip decimal form, so
//! `parse(serialize(m)) == m` for every valid message and
//! `serialize(parse(l)) == l` for every canonical line.
//!
//! ```text
//! POS x y z t                          metres, sender ms
//! AVA theta theta_dot alpha_p alpha_s ia t flags
//! CAL px py pz ax ay az nx ny nz radius
//! CMD start | stop | phase awing|pawing | condition solo|pawing|adaptive
//! PING id / PONG id
//! ERR CODE free text
//! ```

use std::fmt;
use std::str::FromStr;

use rehab_core::session::{Condition, Phase};

/// Longest accepted line, excluding the terminator.
pub const MAX_LINE: usize = 256;
/// Version of the AVA field layout.
pub const AVA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrCode {
    BadMsg,
    NoCal,
    Degenerate,
    Busy,
}

impl ErrCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrCode::BadMsg => "BAD_MSG",
            ErrCode::NoCal => "NO_CAL",
            ErrCode::Degenerate => "DEGENERATE",
            ErrCode::Busy => "BUSY",
        }
    }
}

impl FromStr for ErrCode {
    type Err = WireError;

    fn from_str(s: &str) -> Result<Self, WireError> {
        Ok(match s {
            "BAD_MSG" => ErrCode::BadMsg,
            "NO_CAL" => ErrCode::NoCal,
            "DEGENERATE" => ErrCode::Degenerate,
            "BUSY" => ErrCode::Busy,
            _ => return Err(WireError::bad(format!("unknown error code {s:?}"))),
        })
    }
}

/// Rejection of an incoming line, sent back as an `ERR` reply.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{} {text}", code.as_str())]
pub struct WireError {
    pub code: ErrCode,
    pub text: String,
}

impl WireError {
    pub fn new(code: ErrCode, text: impl Into<String>) -> Self {
        Self { code, text: sanitize(&text.into()) }
    }

    pub fn bad(text: impl Into<String>) -> Self {
        Self::new(ErrCode::BadMsg, text)
    }

    pub fn to_message(&self) -> Message {
        Message::Err { code: self.code, text: self.text.clone() }
    }
}

/// Collapses whitespace and truncates so the reply fits on one line.
pub fn sanitize(text: &str) -> String {
    let mut out = text.split_whitespace().collect::<Vec<_>>().join(" ");
    let budget = MAX_LINE - "ERR DEGENERATE ".len();
    if out.len() > budget {
        let mut cut = budget;
        while !out.is_char_boundary(cut) {
            cut -= 1;
        }
        out.truncate(cut);
        out.truncate(out.trim_end().len());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Start,
    Stop,
    Phase(Phase),
    Condition(Condition),
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Command::Start => f.write_str("start"),
            Command::Stop => f.write_str("stop"),
            Command::Phase(p) => write!(f, "phase {}", p.to_string().to_ascii_lowercase()),
            Command::Condition(c) => write!(f, "condition {c}"),
        }
    }
}

/// Status bits carried in the last AVA field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AvaFlags {
    pub stale: bool,
    pub paused: bool,
    pub saturated: bool,
    pub recording: bool,
}

impl AvaFlags {
    const NAMES: [&'static str; 4] = ["STALE", "PAUSED", "SAT", "REC"];

    fn bits(&self) -> [bool; 4] {
        [self.stale, self.paused, self.saturated, self.recording]
    }
}

impl fmt::Display for AvaFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let set: Vec<&str> = Self::NAMES.iter().zip(self.bits()).filter(|(_, b)| *b).map(|(n, _)| *n).collect();
        if set.is_empty() {
            f.write_str("-")
        } else {
            f.write_str(&set.join(","))
        }
    }
}

impl FromStr for AvaFlags {
    type Err = WireError;

    fn from_str(s: &str) -> Result<Self, WireError> {
        let mut flags = AvaFlags::default();
        if s == "-" {
            return Ok(flags);
        }
        let mut last = None;
        for name in s.split(',') {
            let idx = Self::NAMES.iter().position(|n| *n == name).ok_or_else(|| WireError::bad(format!("unknown flag {name:?}")))?;
            // Canonical order, no repeats.
            if last.is_some_and(|l| idx <= l) {
                return Err(WireError::bad("flags out of order"));
            }
            last = Some(idx);
            match idx {
                0 => flags.stale = true,
                1 => flags.paused = true,
                2 => flags.saturated = true,
                _ => flags.recording = true,
            }
        }
        Ok(flags)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ava {
    pub theta: f64,
    pub theta_dot: f64,
    pub alpha_p: f64,
    pub alpha_s: f64,
    pub ia_live: f64,
    pub t: f64,
    pub flags: AvaFlags,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Pos { x: f64, y: f64, z: f64, t: f64 },
    Ava(Ava),
    Cal { pivot: [f64; 3], axis: [f64; 3], normal: [f64; 3], radius: f64 },
    Cmd(Command),
    Ping(u64),
    Pong(u64),
    Err { code: ErrCode, text: String },
}

fn num(s: &str) -> Result<f64, WireError> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(WireError::bad(format!("not a finite number: {s:?}"))),
    }
}

fn nums<const N: usize>(fields: &[&str]) -> Result<[f64; N], WireError> {
    if fields.len() != N {
        return Err(WireError::bad(format!("expected {N} fields, got {}", fields.len())));
    }
    let mut out = [0.0; N];
    for (o, f) in out.iter_mut().zip(fields) {
        *o = num(f)?;
    }
    Ok(out)
}

fn id(fields: &[&str]) -> Result<u64, WireError> {
    match fields {
        [s] => s.parse().map_err(|_| WireError::bad(format!("bad id {s:?}"))),
        _ => Err(WireError::bad("expected one id field")),
    }
}

/// Parses one line; a single trailing `\n` (or `\r\n`) is accepted.
pub fn parse(line: &str) -> Result<Message, WireError> {
    let line = line.strip_suffix('\n').unwrap_or(line);
    let line = line.strip_suffix('\r').unwrap_or(line);
    if line.len() > MAX_LINE {
        return Err(WireError::bad(format!("line longer than {MAX_LINE} bytes")));
    }
    if line.contains('\n') {
        return Err(WireError::bad("embedded newline"));
    }
    let (verb, rest) = line.split_once(' ').unwrap_or((line, ""));
    let fields: Vec<&str> = if rest.is_empty() { Vec::new() } else { rest.split(' ').collect() };
    if verb != "ERR" && fields.iter().any(|f| f.is_empty()) {
        return Err(WireError::bad("empty field"));
    }
    match verb {
        "POS" => {
            let [x, y, z, t] = nums(&fields)?;
            Ok(Message::Pos { x, y, z, t })
        }
        "AVA" => {
            if fields.len() != 7 {
                return Err(WireError::bad(format!("AVA expects 7 fields, got {}", fields.len())));
            }
            let [theta, theta_dot, alpha_p, alpha_s, ia_live, t] = nums(&fields[..6])?;
            Ok(Message::Ava(Ava { theta, theta_dot, alpha_p, alpha_s, ia_live, t, flags: fields[6].parse()? }))
        }
        "CAL" => {
            let v: [f64; 10] = nums(&fields)?;
            Ok(Message::Cal {
                pivot: [v[0], v[1], v[2]],
                axis: [v[3], v[4], v[5]],
                normal: [v[6], v[7], v[8]],
                radius: v[9],
            })
        }
        "CMD" => {
            let cmd = match fields.as_slice() {
                ["start"] => Command::Start,
                ["stop"] => Command::Stop,
                ["phase", p] if p.chars().all(|c| c.is_ascii_lowercase()) => {
                    Command::Phase(p.parse().map_err(|_| WireError::bad(format!("unknown phase {p:?}")))?)
                }
                ["condition", c @ ("solo" | "pawing" | "adaptive")] => Command::Condition(c.parse().expect("listed")),
                _ => return Err(WireError::bad(format!("unknown command {rest:?}"))),
            };
            Ok(Message::Cmd(cmd))
        }
        "PING" => Ok(Message::Ping(id(&fields)?)),
        "PONG" => Ok(Message::Pong(id(&fields)?)),
        "ERR" => {
            let code: ErrCode = fields.first().ok_or_else(|| WireError::bad("ERR needs a code"))?.parse()?;
            let text = rest.split_once(' ').map_or("", |(_, t)| t);
            if text != sanitize(text) {
                return Err(WireError::bad("non-canonical error text"));
            }
            Ok(Message::Err { code, text: text.to_string() })
        }
        _ => Err(WireError::bad(format!("unknown verb {verb:?}"))),
    }
}

impl fmt::Display for Message {
    /// Canonical line, without terminator.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Message::Pos { x, y, z, t } => write!(f, "POS {x:?} {y:?} {z:?} {t:?}"),
            Message::Ava(a) => write!(
                f,
                "AVA {:?} {:?} {:?} {:?} {:?} {:?} {}",
                a.theta, a.theta_dot, a.alpha_p, a.alpha_s, a.ia_live, a.t, a.flags
            ),
            Message::Cal { pivot: p, axis: a, normal: n, radius } => write!(
                f,
                "CAL {:?} {:?} {:?} {:?} {:?} {:?} {:?} {:?} {:?} {radius:?}",
                p[0], p[1], p[2], a[0], a[1], a[2], n[0], n[1], n[2]
            ),
            Message::Cmd(c) => write!(f, "CMD {c}"),
            Message::Ping(id) => write!(f, "PING {id}"),
            Message::Pong(id) => write!(f, "PONG {id}"),
            Message::Err { code, text } if text.is_empty() => write!(f, "ERR {}", code.as_str()),
            Message::Err { code, text } => write!(f, "ERR {} {text}", code.as_str()),
        }
    }
}

/// Canonical line with its `\n` terminator.
pub fn serialize(msg: &Message) -> String {
    format!("{msg}\n")
}
