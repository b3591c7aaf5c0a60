use std::fmt::Write;

/// One line of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
    pub dev_accuracy: f64,
    pub elapsed_secs: f64,
}

impl EpochRecord {
    /// Tab-separated: epoch, train loss, dev loss, dev accuracy, elapsed
    /// seconds.
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{:.6}\t{:.6}\t{:.6}\t{:.3}",
            self.epoch, self.train_loss, self.dev_loss, self.dev_accuracy, self.elapsed_secs
        )
    }

    /// The line without the wall-clock column.
    pub fn deterministic_fields(&self) -> String {
        let line = self.to_line();
        line.rsplit_once('\t')
            .map_or(line.clone(), |(head, _)| head.to_string())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub fn push(&mut self, r: EpochRecord) {
        self.epochs.push(r);
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    /// Epoch with the lowest dev loss (the earliest on ties).
    pub fn best_epoch(&self) -> Option<usize> {
        self.epochs
            .iter()
            .fold(None::<&EpochRecord>, |best, r| match best {
                Some(b) if b.dev_loss <= r.dev_loss => Some(b),
                _ => Some(r),
            })
            .map(|r| r.epoch)
    }

    /// Header plus one line per epoch, without wall-clock times, so two runs
    /// with the same seed write the same bytes.
    pub fn to_log(&self) -> String {
        let mut out = String::from("epoch\ttrain_loss\tdev_loss\tdev_accuracy\n");
        for r in &self.epochs {
            writeln!(out, "{}", r.deterministic_fields()).unwrap();
        }
        out
    }
}
