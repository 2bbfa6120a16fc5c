//! Bit-exact UDP datagrams between the decoder and the haptic simulator.
//!
//! All integers are big-endian; every datagram ends with the CRC-32 (IEEE) of
//! the bytes before it.
//!
//! | type    | layout after `"NBCI" ver type`                      | total |
//! |---------|-----------------------------------------------------|-------|
//! | COMMAND | `seq:u32 dir:i8 auc_e1:f32 auc_e2:f32 crc:u32`      | 23    |
//! | ACK     | `seq:u32 crc:u32`                                    | 14    |
//! | STATE   | `seq:u32 position:f64 crc:u32`                       | 22    |

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"NBCI";
pub const VERSION: u8 = 1;
pub const TYPE_COMMAND: u8 = 1;
pub const TYPE_ACK: u8 = 2;
pub const TYPE_STATE: u8 = 3;
/// COMMAND bytes covered by the CRC.
pub const COMMAND_PAYLOAD_LEN: usize = 19;
pub const COMMAND_LEN: usize = COMMAND_PAYLOAD_LEN + 4;
pub const ACK_LEN: usize = 14;
pub const STATE_LEN: usize = 22;
const HEADER_LEN: usize = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("truncated datagram: {needed} bytes needed, {got} received")]
    Truncated { needed: usize, got: usize },
    #[error("field `magic`: expected \"NBCI\", found {found:02x?}")]
    BadMagic { found: Vec<u8> },
    #[error("field `version`: unsupported version {0}")]
    BadVersion(u8),
    #[error("field `type`: unknown message type {0}")]
    BadType(u8),
    #[error("field `direction`: invalid value {0}")]
    BadDirection(i8),
    #[error("field `{field}`: {value} is not an AUC in [0, 1]")]
    BadAuc { field: &'static str, value: f32 },
    #[error("field `position`: non-finite value")]
    BadPosition,
    #[error("field `crc`: expected {expected:08x}, computed {computed:08x}")]
    Crc { expected: u32, computed: u32 },
    #[error("field `length`: {got} bytes, a {kind} datagram has {expected}")]
    Length { kind: &'static str, expected: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Direction {
    Right,
    Left,
    None,
}

impl Direction {
    pub fn as_i8(self) -> i8 {
        match self {
            Direction::Right => 1,
            Direction::Left => -1,
            Direction::None => 0,
        }
    }

    pub fn from_i8(v: i8) -> Result<Self, ProtocolError> {
        match v {
            1 => Ok(Direction::Right),
            -1 => Ok(Direction::Left),
            0 => Ok(Direction::None),
            other => Err(ProtocolError::BadDirection(other)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Command {
    pub seq: u32,
    pub direction: Direction,
    pub auc_e1: f32,
    pub auc_e2: f32,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Datagram {
    Command(Command),
    Ack { seq: u32 },
    State { seq: u32, position: f64 },
}

fn header(kind: u8, seq: u32, cap: usize) -> Vec<u8> {
    let mut b = Vec::with_capacity(cap);
    b.extend_from_slice(MAGIC);
    b.push(VERSION);
    b.push(kind);
    b.extend_from_slice(&seq.to_be_bytes());
    b
}

fn seal(mut b: Vec<u8>) -> Vec<u8> {
    let crc = crc32fast::hash(&b);
    b.extend_from_slice(&crc.to_be_bytes());
    b
}

fn check_auc(field: &'static str, value: f32) -> Result<(), ProtocolError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(ProtocolError::BadAuc { field, value })
    }
}

/// The 19 bytes of a COMMAND before its CRC.
pub fn command_payload(cmd: &Command) -> Result<Vec<u8>, ProtocolError> {
    check_auc("auc_e1", cmd.auc_e1)?;
    check_auc("auc_e2", cmd.auc_e2)?;
    let mut b = header(TYPE_COMMAND, cmd.seq, COMMAND_LEN);
    b.push(cmd.direction.as_i8() as u8);
    b.extend_from_slice(&cmd.auc_e1.to_be_bytes());
    b.extend_from_slice(&cmd.auc_e2.to_be_bytes());
    Ok(b)
}

pub fn encode_datagram(cmd: &Command) -> Result<Vec<u8>, ProtocolError> {
    Ok(seal(command_payload(cmd)?))
}

pub fn encode_ack(seq: u32) -> Vec<u8> {
    seal(header(TYPE_ACK, seq, ACK_LEN))
}

pub fn encode_state(seq: u32, position: f64) -> Vec<u8> {
    let mut b = header(TYPE_STATE, seq, STATE_LEN);
    b.extend_from_slice(&position.to_be_bytes());
    seal(b)
}

fn be_u32(b: &[u8]) -> u32 {
    u32::from_be_bytes(b.try_into().expect("4 bytes"))
}

/// Parse any datagram type. Total: every input yields a value or an error.
pub fn decode(bytes: &[u8]) -> Result<Datagram, ProtocolError> {
    if bytes.len() < HEADER_LEN {
        return Err(ProtocolError::Truncated {
            needed: HEADER_LEN,
            got: bytes.len(),
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(ProtocolError::BadMagic {
            found: bytes[..4].to_vec(),
        });
    }
    if bytes[4] != VERSION {
        return Err(ProtocolError::BadVersion(bytes[4]));
    }
    let (kind, expected) = match bytes[5] {
        TYPE_COMMAND => ("COMMAND", COMMAND_LEN),
        TYPE_ACK => ("ACK", ACK_LEN),
        TYPE_STATE => ("STATE", STATE_LEN),
        t => return Err(ProtocolError::BadType(t)),
    };
    if bytes.len() < expected {
        return Err(ProtocolError::Truncated {
            needed: expected,
            got: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(ProtocolError::Length {
            kind,
            expected,
            got: bytes.len(),
        });
    }
    let body = &bytes[..expected - 4];
    let expected_crc = be_u32(&bytes[expected - 4..]);
    let computed = crc32fast::hash(body);
    if expected_crc != computed {
        return Err(ProtocolError::Crc {
            expected: expected_crc,
            computed,
        });
    }
    let seq = be_u32(&bytes[6..10]);
    match bytes[5] {
        TYPE_COMMAND => {
            let direction = Direction::from_i8(bytes[10] as i8)?;
            let auc_e1 = f32::from_be_bytes(bytes[11..15].try_into().expect("4 bytes"));
            let auc_e2 = f32::from_be_bytes(bytes[15..19].try_into().expect("4 bytes"));
            check_auc("auc_e1", auc_e1)?;
            check_auc("auc_e2", auc_e2)?;
            Ok(Datagram::Command(Command {
                seq,
                direction,
                auc_e1,
                auc_e2,
            }))
        }
        TYPE_ACK => Ok(Datagram::Ack { seq }),
        _ => {
            let position = f64::from_be_bytes(bytes[10..18].try_into().expect("8 bytes"));
            if !position.is_finite() {
                return Err(ProtocolError::BadPosition);
            }
            Ok(Datagram::State { seq, position })
        }
    }
}

/// Parse a COMMAND datagram.
pub fn decode_datagram(bytes: &[u8]) -> Result<Command, ProtocolError> {
    match decode(bytes)? {
        Datagram::Command(c) => Ok(c),
        Datagram::Ack { .. } => Err(ProtocolError::BadType(TYPE_ACK)),
        Datagram::State { .. } => Err(ProtocolError::BadType(TYPE_STATE)),
    }
}
