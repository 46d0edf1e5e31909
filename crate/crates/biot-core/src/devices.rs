//! Simulated IoT endpoints and their 24-byte wire frames.
//!
//! Every frame is exactly 24 bytes: a 16-byte device id followed by an
//! 8-byte data section. The data section layout depends on the frame kind:
//!
//! ```text
//! telemetry:      timestamp u32 BE | temperature i16 BE (centi-degC) | sequence u16 BE
//! light command:  0x01 | opcode | 6 zero bytes
//! light response: 0x02 | state  | 6 zero bytes
//! ```
//!
//! Devices exchange whole frames with the gateway; only the 8-byte data
//! section travels onward to the anchoring layer, the device id going as an
//! explicit argument.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::types::DeviceId;

pub const FRAME_LEN: usize = 24;
pub const DATA_SECTION_LEN: usize = 8;

const TAG_LIGHT_COMMAND: u8 = 0x01;
const TAG_LIGHT_RESPONSE: u8 = 0x02;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DeviceError {
    #[error("frame is {0} bytes; frames are exactly 24")]
    BadFrameLength(usize),
    #[error("frame addressed to {got}, device is {want}")]
    WrongDevice { got: DeviceId, want: DeviceId },
    #[error("unknown frame tag {0:#04x}")]
    BadTag(u8),
    #[error("unknown light opcode {0:#04x}")]
    UnknownOpcode(u8),
    #[error("unknown light state byte {0:#04x}")]
    UnknownState(u8),
    #[error("frame padding bytes must be zero")]
    BadPadding,
    #[error("device {0} does not accept inbound frames")]
    NotAddressable(DeviceId),
}

/// Periodic sensor reading. Temperature is in hundredths of a degree
/// Celsius; the sequence counter wraps at 16 bits independently of any
/// on-chain numbering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TelemetryFrame {
    pub device_id: DeviceId,
    pub timestamp: u32,
    pub temperature_centi: i16,
    pub sequence: u16,
}

impl TelemetryFrame {
    pub fn encode(&self) -> [u8; FRAME_LEN] {
        let mut frame = [0u8; FRAME_LEN];
        frame[..16].copy_from_slice(&self.device_id.0);
        frame[16..20].copy_from_slice(&self.timestamp.to_be_bytes());
        frame[20..22].copy_from_slice(&self.temperature_centi.to_be_bytes());
        frame[22..24].copy_from_slice(&self.sequence.to_be_bytes());
        frame
    }

    pub fn decode(frame: &[u8]) -> Result<Self, DeviceError> {
        if frame.len() != FRAME_LEN {
            return Err(DeviceError::BadFrameLength(frame.len()));
        }
        let mut id = [0u8; 16];
        id.copy_from_slice(&frame[..16]);
        Ok(TelemetryFrame {
            device_id: DeviceId(id),
            timestamp: u32::from_be_bytes(frame[16..20].try_into().unwrap()),
            temperature_centi: i16::from_be_bytes(frame[20..22].try_into().unwrap()),
            sequence: u16::from_be_bytes(frame[22..24].try_into().unwrap()),
        })
    }

    pub fn data_section(&self) -> [u8; DATA_SECTION_LEN] {
        let frame = self.encode();
        frame[16..].try_into().unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum LightOpcode {
    On = 0x01,
    Off = 0x02,
    Toggle = 0x03,
    Status = 0x04,
}

impl LightOpcode {
    pub fn from_byte(b: u8) -> Result<Self, DeviceError> {
        match b {
            0x01 => Ok(LightOpcode::On),
            0x02 => Ok(LightOpcode::Off),
            0x03 => Ok(LightOpcode::Toggle),
            0x04 => Ok(LightOpcode::Status),
            other => Err(DeviceError::UnknownOpcode(other)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LightCommand {
    pub device_id: DeviceId,
    pub opcode: LightOpcode,
}

impl LightCommand {
    pub fn encode(&self) -> [u8; FRAME_LEN] {
        let mut frame = [0u8; FRAME_LEN];
        frame[..16].copy_from_slice(&self.device_id.0);
        frame[16] = TAG_LIGHT_COMMAND;
        frame[17] = self.opcode as u8;
        frame
    }

    pub fn decode(frame: &[u8]) -> Result<Self, DeviceError> {
        let (device_id, tag, value) = split_tagged(frame)?;
        if tag != TAG_LIGHT_COMMAND {
            return Err(DeviceError::BadTag(tag));
        }
        Ok(LightCommand {
            device_id,
            opcode: LightOpcode::from_byte(value)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LightResponse {
    pub device_id: DeviceId,
    pub on: bool,
}

impl LightResponse {
    pub fn encode(&self) -> [u8; FRAME_LEN] {
        let mut frame = [0u8; FRAME_LEN];
        frame[..16].copy_from_slice(&self.device_id.0);
        frame[16] = TAG_LIGHT_RESPONSE;
        frame[17] = self.on as u8;
        frame
    }

    pub fn decode(frame: &[u8]) -> Result<Self, DeviceError> {
        let (device_id, tag, value) = split_tagged(frame)?;
        if tag != TAG_LIGHT_RESPONSE {
            return Err(DeviceError::BadTag(tag));
        }
        let on = match value {
            0x00 => false,
            0x01 => true,
            other => return Err(DeviceError::UnknownState(other)),
        };
        Ok(LightResponse { device_id, on })
    }
}

fn split_tagged(frame: &[u8]) -> Result<(DeviceId, u8, u8), DeviceError> {
    if frame.len() != FRAME_LEN {
        return Err(DeviceError::BadFrameLength(frame.len()));
    }
    if frame[18..].iter().any(|&b| b != 0) {
        return Err(DeviceError::BadPadding);
    }
    let mut id = [0u8; 16];
    id.copy_from_slice(&frame[..16]);
    Ok((DeviceId(id), frame[16], frame[17]))
}

/// Device id from any well-formed frame without interpreting its data
/// section.
pub fn frame_device_id(frame: &[u8]) -> Result<DeviceId, DeviceError> {
    if frame.len() != FRAME_LEN {
        return Err(DeviceError::BadFrameLength(frame.len()));
    }
    let mut id = [0u8; 16];
    id.copy_from_slice(&frame[..16]);
    Ok(DeviceId(id))
}

/// Bounded random walk for the container's cargo hold temperature. Starts
/// at -18.00 degC and drifts by at most 0.10 degC per reading, clamped to
/// [-30.00, +30.00].
pub struct TemperatureModel {
    rng: ChaCha8Rng,
    current_centi: i16,
}

impl TemperatureModel {
    pub const START_CENTI: i16 = -1800;
    pub const MIN_CENTI: i16 = -3000;
    pub const MAX_CENTI: i16 = 3000;
    pub const MAX_STEP_CENTI: i16 = 10;

    pub fn new(seed: u64) -> Self {
        TemperatureModel {
            rng: ChaCha8Rng::seed_from_u64(seed),
            current_centi: Self::START_CENTI,
        }
    }

    pub fn next_reading(&mut self) -> i16 {
        let step = self
            .rng
            .gen_range(-Self::MAX_STEP_CENTI..=Self::MAX_STEP_CENTI);
        self.current_centi = (self.current_centi + step).clamp(Self::MIN_CENTI, Self::MAX_CENTI);
        self.current_centi
    }
}

/// A simulated endpoint attached to the gateway. Producers emit frames on
/// `tick`; addressable devices answer `handle_frame`.
pub trait SimDevice {
    fn device_id(&self) -> DeviceId;

    /// Called on the device's own schedule; a producer returns its frame.
    fn tick(&mut self, _now: u64) -> Option<Vec<u8>> {
        None
    }

    /// Handles one inbound frame and returns the response frame.
    fn handle_frame(&mut self, frame: &[u8], now: u64) -> Result<Vec<u8>, DeviceError>;
}

/// Refrigerated shipping container: emits one telemetry frame per tick and
/// accepts nothing inbound.
pub struct ContainerSensor {
    id: DeviceId,
    model: TemperatureModel,
    sequence: u16,
}

impl ContainerSensor {
    pub fn new(id: DeviceId, seed: u64) -> Self {
        ContainerSensor {
            id,
            model: TemperatureModel::new(seed),
            sequence: 0,
        }
    }
}

impl SimDevice for ContainerSensor {
    fn device_id(&self) -> DeviceId {
        self.id
    }

    fn tick(&mut self, now: u64) -> Option<Vec<u8>> {
        self.sequence = self.sequence.wrapping_add(1);
        let frame = TelemetryFrame {
            device_id: self.id,
            timestamp: now as u32,
            temperature_centi: self.model.next_reading(),
            sequence: self.sequence,
        };
        Some(frame.encode().to_vec())
    }

    fn handle_frame(&mut self, _frame: &[u8], _now: u64) -> Result<Vec<u8>, DeviceError> {
        Err(DeviceError::NotAddressable(self.id))
    }
}

/// Mains-powered smart light: answers commands, never speaks first.
pub struct SmartLight {
    id: DeviceId,
    on: bool,
}

impl SmartLight {
    pub fn new(id: DeviceId) -> Self {
        SmartLight { id, on: false }
    }

    pub fn is_on(&self) -> bool {
        self.on
    }
}

impl SimDevice for SmartLight {
    fn device_id(&self) -> DeviceId {
        self.id
    }

    fn handle_frame(&mut self, frame: &[u8], _now: u64) -> Result<Vec<u8>, DeviceError> {
        let command = LightCommand::decode(frame)?;
        if command.device_id != self.id {
            return Err(DeviceError::WrongDevice {
                got: command.device_id,
                want: self.id,
            });
        }
        match command.opcode {
            LightOpcode::On => self.on = true,
            LightOpcode::Off => self.on = false,
            LightOpcode::Toggle => self.on = !self.on,
            LightOpcode::Status => {}
        }
        Ok(LightResponse {
            device_id: self.id,
            on: self.on,
        }
        .encode()
        .to_vec())
    }
}
