//! JSON bodies of the HTTP backend protocol.
//!
//! | endpoint          | request                                    | reply                          |
//! |-------------------|--------------------------------------------|--------------------------------|
//! | `/generate`       | [`GenerateBody`]                           | [`super::RawGeneration`]       |
//! | `/embed_text`     | `{"text": str}`                            | `{"vector": [f64]}`            |
//! | `/embed_image`    | `{"image_b64": str}`                       | `{"vector": [f64]}`            |
//! | `/embed_sentence` | `{"text": str}`                            | `{"vector": [f64]}`            |
//! | `/ner`            | `{"text": str}`                            | `{"entities": [{surface, kind}]}` |

use serde::{Deserialize, Serialize};

use super::{EntitySpan, GenerationRequest, Role};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireTurn {
    pub role: Role,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_b64: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateBody {
    pub system: String,
    pub turns: Vec<WireTurn>,
    pub top_k: usize,
    pub logprobs: bool,
}

impl GenerateBody {
    pub fn from_request(req: &GenerationRequest) -> Result<Self> {
        let turns = req
            .turns
            .iter()
            .map(|t| {
                Ok(WireTurn {
                    role: t.role,
                    text: t.text.clone(),
                    image_b64: t.image.as_ref().map(|i| i.to_base64()).transpose()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GenerateBody {
            system: req.system_prompt.clone(),
            turns,
            top_k: req.want_top_candidates,
            logprobs: req.want_logprobs,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TextBody {
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageBody {
    pub image_b64: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VectorReply {
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntitiesReply {
    pub entities: Vec<EntitySpan>,
}
