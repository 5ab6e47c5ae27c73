/// Frame-stamped samples with horizon-based eviction.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStore<S> {
    entries: Vec<(usize, S)>,
}

impl<S> Default for SampleStore<S> {
    fn default() -> Self {
        SampleStore { entries: Vec::new() }
    }
}

impl<S> SampleStore<S> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, frame: usize, sample: S) {
        self.entries.push((frame, sample));
    }

    pub fn extend(&mut self, frame: usize, samples: impl IntoIterator<Item = S>) {
        self.entries.extend(samples.into_iter().map(|s| (frame, s)));
    }

    /// Keeps entries with `current − frame < horizon`.
    pub fn trim(&mut self, current: usize, horizon: usize) {
        self.entries.retain(|(f, _)| current.saturating_sub(*f) < horizon);
    }

    /// Samples stamped within `horizon` frames of `current`.
    pub fn recent(&self, current: usize, horizon: usize) -> Vec<&S> {
        self.entries
            .iter()
            .filter(|(f, _)| current.saturating_sub(*f) < horizon)
            .map(|(_, s)| s)
            .collect()
    }

    pub fn frames(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|(f, _)| *f)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}
