//! Self-hosted ingestion and sync service for road telemetry packages.
//!
//! Plain HTTP/1.1 with JSON bodies and server-sent events:
//!
//! | method | path                               | purpose                          |
//! |--------|------------------------------------|----------------------------------|
//! | POST   | `/v1/packages`                     | register a manifest (idempotent) |
//! | GET    | `/v1/packages?since_seq=k`         | committed packages after `k`     |
//! | GET    | `/v1/packages/{id}`                | upload session and offsets       |
//! | HEAD   | `/v1/packages/{id}/blobs/{name}`   | durable offset of one blob       |
//! | PUT    | `/v1/packages/{id}/blobs/{name}`   | append a `Content-Range` chunk   |
//! | GET    | `/v1/packages/{id}/blobs/{name}`   | download a committed blob        |
//! | POST   | `/v1/packages/{id}/commit`         | verify digests, assign commit_seq|
//! | GET    | `/v1/stream?from_seq=k`            | commit events after `k`, live    |

pub mod client;
pub mod protocol;
pub mod replay;
pub mod server;
pub mod uploader;

pub use client::{ClientError, SyncClient};
pub use server::{spawn_background, ServerConfig, ServerHandle};
