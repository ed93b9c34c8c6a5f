//! The six-way hemorrhage label set.

pub const NUM_LABELS: usize = 6;

/// Index of the aggregate "any hemorrhage" label.
pub const ANY: usize = 5;

/// Number of subtype labels (everything except [`ANY`]).
pub const NUM_SUBTYPES: usize = 5;

/// One presence flag per label, in [`Hemorrhage::ALL`] order.
pub type LabelVector = [bool; NUM_LABELS];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Hemorrhage {
    Epidural,
    Intraparenchymal,
    Intraventricular,
    Subarachnoid,
    Subdural,
    Any,
}

impl Hemorrhage {
    pub const ALL: [Hemorrhage; NUM_LABELS] = [
        Hemorrhage::Epidural,
        Hemorrhage::Intraparenchymal,
        Hemorrhage::Intraventricular,
        Hemorrhage::Subarachnoid,
        Hemorrhage::Subdural,
        Hemorrhage::Any,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Hemorrhage::Epidural => "epidural",
            Hemorrhage::Intraparenchymal => "intraparenchymal",
            Hemorrhage::Intraventricular => "intraventricular",
            Hemorrhage::Subarachnoid => "subarachnoid",
            Hemorrhage::Subdural => "subdural",
            Hemorrhage::Any => "any",
        }
    }
}

/// Set the `any` flag to the OR of the subtype flags.
pub fn with_any(mut labels: LabelVector) -> LabelVector {
    labels[ANY] = labels[..NUM_SUBTYPES].iter().any(|&b| b);
    labels
}

pub fn as_f64(labels: &LabelVector) -> [f64; NUM_LABELS] {
    labels.map(|b| if b { 1.0 } else { 0.0 })
}
