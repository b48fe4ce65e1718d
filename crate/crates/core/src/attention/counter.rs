use std::cell::Cell;

/// Per-run tally of (query, attended location) pairs, counted for one head.
#[derive(Debug, Default)]
pub struct OpCounter {
    comparisons: Cell<u64>,
}

impl OpCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&self, n: u64) {
        self.comparisons.set(self.comparisons.get() + n);
    }

    pub fn comparisons(&self) -> u64 {
        self.comparisons.get()
    }

    pub fn reset(&self) {
        self.comparisons.set(0);
    }
}
