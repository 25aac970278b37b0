use std::collections::VecDeque;

use super::{CommandLimits, DriveCommand, Pilot, PilotStep};
use crate::error::Result;
use crate::models::{denormalize, forward_brain, preprocess, InputKind, ModelSpec, ModelWeights};
use crate::simworld::ImageFrame;
use crate::tensor_nn::Tensor;

pub const SEQUENCE_LEN: usize = 3;

/// The last three preprocessed frames, oldest first. The first push fills all three slots.
#[derive(Clone, Debug, Default)]
pub struct SequenceBuffer {
    frames: VecDeque<Tensor>,
}

impl SequenceBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, frame: Tensor) {
        if self.frames.is_empty() {
            for _ in 1..SEQUENCE_LEN {
                self.frames.push_back(frame.clone());
            }
        } else {
            self.frames.pop_front();
        }
        self.frames.push_back(frame);
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn clear(&mut self) {
        self.frames.clear();
    }

    pub fn frames(&self) -> Vec<Tensor> {
        self.frames.iter().cloned().collect()
    }

    pub fn newest(&self) -> Option<&Tensor> {
        self.frames.back()
    }

    /// What the model consumes: the newest frame or the whole window.
    pub fn input_for(&self, kind: InputKind) -> Vec<Tensor> {
        match kind {
            InputKind::SingleFrame => self.newest().cloned().into_iter().collect(),
            InputKind::SequenceOf3 => self.frames(),
        }
    }
}

/// Pushes a preprocessed frame and returns the denormalized command.
pub fn neural_command(
    spec: &ModelSpec,
    weights: &ModelWeights,
    buffer: &mut SequenceBuffer,
    frame: Tensor,
    limits: CommandLimits,
) -> Result<DriveCommand> {
    buffer.push(frame);
    let (v, w) = forward_brain(spec, weights, &buffer.input_for(spec.input_kind))?;
    Ok(denormalize(v, w, limits))
}

#[derive(Clone, Debug)]
pub struct NeuralPilot {
    pub spec: ModelSpec,
    pub weights: ModelWeights,
    pub limits: CommandLimits,
    buffer: SequenceBuffer,
}

impl NeuralPilot {
    pub fn new(spec: ModelSpec, weights: ModelWeights, limits: CommandLimits) -> Self {
        NeuralPilot {
            spec,
            weights,
            limits,
            buffer: SequenceBuffer::new(),
        }
    }

    pub fn buffer(&self) -> &SequenceBuffer {
        &self.buffer
    }
}

impl Pilot for NeuralPilot {
    fn label(&self) -> String {
        self.spec.name.to_string()
    }

    fn reset(&mut self) {
        self.buffer.clear();
    }

    fn act(&mut self, frame: &ImageFrame, _dt: f64) -> Result<PilotStep> {
        let x = preprocess(frame, &self.spec.preprocess_spec(frame.horizon_row))?;
        let cmd = neural_command(&self.spec, &self.weights, &mut self.buffer, x, self.limits)?;
        Ok(PilotStep {
            cmd,
            line_lost_for: 0.0,
        })
    }
}
