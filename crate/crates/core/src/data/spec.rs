use serde::{Deserialize, Serialize};

use crate::data::{JsonlRecord, QaPair, SpecProduct};
use crate::error::{Error, Result};

/// A question about a product together with the name of the specification
/// that answers it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecQuestion {
    pub product_id: String,
    pub question: String,
    pub spec_name: String,
}

impl JsonlRecord for SpecQuestion {
    const REQUIRED: &'static [&'static str] = &["product_id", "question", "spec_name"];
}

pub fn group_id_for(product_id: &str, question_index: usize) -> String {
    format!("{product_id}:{question_index}")
}

/// Crosses every question with every specification of `product`; a pair is
/// positive iff the specification is the question's correct one. With `h`
/// specs and `k` questions this yields `h·k` pairs, `k` of them positive.
pub fn generate_spec_pairs<Q, S>(product: &SpecProduct, questions: &[(Q, S)]) -> Result<Vec<QaPair>>
where
    Q: AsRef<str>,
    S: AsRef<str>,
{
    let mut out = Vec::with_capacity(product.specs.len() * questions.len());
    for (qi, (question, correct)) in questions.iter().enumerate() {
        let (question, correct) = (question.as_ref(), correct.as_ref());
        if product.spec(correct).is_none() {
            return Err(Error::ReferentialIntegrity {
                question: question.to_string(),
                spec: correct.to_string(),
            });
        }
        let group_id = group_id_for(&product.product_id, qi);
        for spec in &product.specs {
            out.push(QaPair::new(
                question,
                spec.name.clone(),
                u8::from(spec.name == correct),
                group_id.clone(),
                Some(product.product_id.clone()),
            ));
        }
    }
    Ok(out)
}
