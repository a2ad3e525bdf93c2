//! Behavioral action classes and recording scenarios.

use crate::error::CoreError;
use serde::{Deserialize, Serialize};
use std::fmt;

/// The five behavioral action classes, in canonical index order. All label
/// vectors, confusion matrices, and class-weight tables follow this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActionClass {
    ObjectTransfer,
    TaskOperation,
    Stationary,
    Locomotion,
    Search,
}

impl ActionClass {
    pub const ALL: [ActionClass; 5] = [
        ActionClass::ObjectTransfer,
        ActionClass::TaskOperation,
        ActionClass::Stationary,
        ActionClass::Locomotion,
        ActionClass::Search,
    ];

    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<ActionClass> {
        ActionClass::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ActionClass::ObjectTransfer => "ObjectTransfer",
            ActionClass::TaskOperation => "TaskOperation",
            ActionClass::Stationary => "Stationary",
            ActionClass::Locomotion => "Locomotion",
            ActionClass::Search => "Search",
        }
    }

    pub fn parse(s: &str) -> Result<ActionClass, CoreError> {
        ActionClass::ALL
            .iter()
            .copied()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| CoreError::UnknownAction(s.to_string()))
    }

    /// Remap to the 4-class granularity: visual search collapses into
    /// stationary (both are low-motion head states).
    pub fn merge4(self) -> ActionClass {
        match self {
            ActionClass::Search => ActionClass::Stationary,
            other => other,
        }
    }

    /// Remap to the 3-class granularity: additionally, object transfer
    /// collapses into task operation (both are manipulation).
    pub fn merge3(self) -> ActionClass {
        match self.merge4() {
            ActionClass::ObjectTransfer => ActionClass::TaskOperation,
            other => other,
        }
    }
}

impl fmt::Display for ActionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The eight recording scenarios, in canonical index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    Cooking,
    Carpentry,
    Cleaning,
    DeskWork,
    MechanicalRepair,
    PlayingInstrument,
    WalkingIndoors,
    WalkingOutdoors,
}

impl Scenario {
    pub const ALL: [Scenario; 8] = [
        Scenario::Cooking,
        Scenario::Carpentry,
        Scenario::Cleaning,
        Scenario::DeskWork,
        Scenario::MechanicalRepair,
        Scenario::PlayingInstrument,
        Scenario::WalkingIndoors,
        Scenario::WalkingOutdoors,
    ];

    pub const COUNT: usize = 8;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Scenario> {
        Scenario::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Cooking => "Cooking",
            Scenario::Carpentry => "Carpentry",
            Scenario::Cleaning => "Cleaning",
            Scenario::DeskWork => "DeskWork",
            Scenario::MechanicalRepair => "MechanicalRepair",
            Scenario::PlayingInstrument => "PlayingInstrument",
            Scenario::WalkingIndoors => "WalkingIndoors",
            Scenario::WalkingOutdoors => "WalkingOutdoors",
        }
    }

    pub fn parse(s: &str) -> Result<Scenario, CoreError> {
        Scenario::ALL
            .iter()
            .copied()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| CoreError::UnknownScenario(s.to_string()))
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
