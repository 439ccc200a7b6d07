use std::collections::VecDeque;

/// Base of the logarithm in the per-image cost factor.
pub const COST_LOG_BASE: f64 = 6.0;

/// `c_I = log(m_I + 1) / log 6 + 1`: grows with the number of matches already
/// found in image `I`, so images with few matches are visited first.
pub fn image_cost_factor(matched: usize) -> f64 {
    (matched as f64 + 1.0).ln() / COST_LOG_BASE.ln() + 1.0
}

/// Feature selected by [`PriorityState::next_feature`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Selected {
    pub image: usize,
    pub feature: u32,
    pub candidates: usize,
}

/// Per-image feature queues ordered by word candidate count, and per-image
/// match counts.
///
/// Features without candidates are kept at the back of their queue: they can
/// never match, so they are only visited once everything else is exhausted.
#[derive(Clone, Debug)]
pub struct PriorityState {
    queues: Vec<VecDeque<(usize, u32)>>,
    matched: Vec<usize>,
    balanced: bool,
}

impl PriorityState {
    /// `images[i]` lists `(feature, candidate count)` of image `i`. With
    /// `balanced = false` every image uses a cost factor of 1.
    pub fn new(images: Vec<Vec<(u32, usize)>>, balanced: bool) -> Self {
        let queues = images
            .into_iter()
            .map(|mut q| {
                q.sort_by_key(|&(f, c)| (sort_key(c), f));
                q.into_iter().map(|(f, c)| (c, f)).collect()
            })
            .collect::<Vec<VecDeque<_>>>();
        let matched = vec![0; queues.len()];
        Self {
            queues,
            matched,
            balanced,
        }
    }

    pub fn image_count(&self) -> usize {
        self.queues.len()
    }

    pub fn remaining(&self) -> usize {
        self.queues.iter().map(|q| q.len()).sum()
    }

    pub fn matched(&self) -> &[usize] {
        &self.matched
    }

    pub fn record_match(&mut self, image: usize) {
        self.matched[image] += 1;
    }

    pub fn cost_factor(&self, image: usize) -> f64 {
        if self.balanced {
            image_cost_factor(self.matched[image])
        } else {
            1.0
        }
    }

    /// Pops the head feature with the smallest scaled cost; ties go to the
    /// lowest image index, then the lowest feature index.
    pub fn next_feature(&mut self) -> Option<Selected> {
        let mut best: Option<(f64, usize)> = None;
        for (image, q) in self.queues.iter().enumerate() {
            let Some(&(count, _)) = q.front() else { continue };
            let cost = if count == 0 {
                f64::INFINITY
            } else {
                self.cost_factor(image) * count as f64
            };
            // images are scanned in ascending order, so a strict comparison
            // keeps the lowest image on ties
            if best.is_none_or(|(c, _)| cost < c) {
                best = Some((cost, image));
            }
        }
        let (_, image) = best?;
        let (candidates, feature) = self.queues[image].pop_front().expect("non-empty queue");
        Some(Selected {
            image,
            feature,
            candidates,
        })
    }
}

fn sort_key(count: usize) -> usize {
    if count == 0 {
        usize::MAX
    } else {
        count
    }
}
