use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Step difficulties of one partial credit item. The step into category 0
/// is the constant 0 and is not stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub id: String,
    pub steps: Vec<f64>,
}

impl Item {
    pub fn categories(&self) -> usize {
        self.steps.len() + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemBank {
    pub items: Vec<Item>,
}

impl ItemBank {
    pub fn new(items: Vec<Item>) -> Result<Self> {
        for item in &items {
            if item.steps.is_empty() {
                return Err(Error::invalid(format!(
                    "item {} has fewer than 2 categories",
                    item.id
                )));
            }
        }
        Ok(ItemBank { items })
    }

    /// Items numbered `1..=n` with all steps at zero.
    pub fn zeros(categories: &[usize]) -> Result<Self> {
        let items = categories
            .iter()
            .enumerate()
            .map(|(i, &m)| Item {
                id: (i + 1).to_string(),
                steps: vec![0.0; m.saturating_sub(1)],
            })
            .collect();
        ItemBank::new(items)
    }

    pub fn from_steps(steps: Vec<Vec<f64>>) -> Result<Self> {
        let items = steps
            .into_iter()
            .enumerate()
            .map(|(i, steps)| Item {
                id: (i + 1).to_string(),
                steps,
            })
            .collect();
        ItemBank::new(items)
    }

    /// Five items with five ordered categories. The step values are spread
    /// around zero with item-specific offsets; they stand in for the
    /// unpublished step estimates of the speed-dating application.
    pub fn five_by_five() -> Self {
        let base = [-2.0, -0.7, 0.4, 1.9];
        let offsets = [-0.3, 0.0, 0.25, -0.1, 0.4];
        let steps = offsets
            .iter()
            .enumerate()
            .map(|(i, off)| {
                base.iter()
                    .enumerate()
                    .map(|(k, b)| b + off + 0.05 * ((i + k) % 3) as f64)
                    .collect()
            })
            .collect();
        ItemBank::from_steps(steps).expect("non-empty steps")
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn categories(&self) -> Vec<usize> {
        self.items.iter().map(Item::categories).collect()
    }

    pub fn steps(&self, item: usize) -> &[f64] {
        &self.items[item].steps
    }

    pub fn total_steps(&self) -> usize {
        self.items.iter().map(|i| i.steps.len()).sum()
    }
}
