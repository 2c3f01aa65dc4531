use serde::{Deserialize, Serialize};

/// Treatment arm: `Control` is w = 0, `Treatment` is w = 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Control,
    Treatment,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Control, Arm::Treatment];
}

/// A value held separately for the control and treatment arms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PerArm<T> {
    pub control: T,
    pub treatment: T,
}

impl<T> PerArm<T> {
    pub const fn new(control: T, treatment: T) -> Self {
        Self { control, treatment }
    }

    pub fn get(&self, arm: Arm) -> &T {
        match arm {
            Arm::Control => &self.control,
            Arm::Treatment => &self.treatment,
        }
    }

    pub fn get_mut(&mut self, arm: Arm) -> &mut T {
        match arm {
            Arm::Control => &mut self.control,
            Arm::Treatment => &mut self.treatment,
        }
    }

    pub fn map<U>(self, mut f: impl FnMut(T) -> U) -> PerArm<U> {
        PerArm {
            control: f(self.control),
            treatment: f(self.treatment),
        }
    }
}

impl<T: Copy> PerArm<T> {
    pub const fn splat(value: T) -> Self {
        Self {
            control: value,
            treatment: value,
        }
    }
}
