use std::fmt;

use super::SessionId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AlertCode {
    BadMac,
    Replay,
    UnknownPeer,
    Unexpected,
    Decode,
    DecryptFailed,
    BadRequest,
    WrongKey,
    MutualAuthFailure,
    DuplicateAck,
    Timeout,
}

impl AlertCode {
    pub fn as_str(self) -> &'static str {
        match self {
            AlertCode::BadMac => "bad-mac",
            AlertCode::Replay => "replay",
            AlertCode::UnknownPeer => "unknown-peer",
            AlertCode::Unexpected => "unexpected-message",
            AlertCode::Decode => "decode-error",
            AlertCode::DecryptFailed => "decrypt-failed",
            AlertCode::BadRequest => "bad-request",
            AlertCode::WrongKey => "wrong-key",
            AlertCode::MutualAuthFailure => "mutual-auth-failure",
            AlertCode::DuplicateAck => "duplicate-ack",
            AlertCode::Timeout => "timeout",
        }
    }

    /// Non-fatal codes are logged without aborting the session.
    pub fn is_fatal(self) -> bool {
        !matches!(self, AlertCode::DuplicateAck)
    }
}

impl fmt::Display for AlertCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Alert {
    pub session: SessionId,
    pub step: u8,
    pub code: AlertCode,
}

impl Alert {
    pub const CSV_HEADER: &'static str = "time_s,session,step,code";

    /// `time,session,step,code`.
    pub fn csv_line(&self, time_s: f64) -> String {
        format!("{time_s:.9},{},{},{}", self.session, self.step, self.code)
    }
}

impl fmt::Display for Alert {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} step {} {}", self.session, self.step, self.code)
    }
}
