/**
 * Embedding backends.
 *
 * The deep pretrained models used at full scale (a CNN for 4096-dim visual
 * features, a contextual language model for 1024-dim text) need weights
 * that are not shipped here, so the default backend is a deterministic
 * feature-hashing embedder: every token (or byte stream) maps to a fixed
 * pseudo-random vector and documents are mean-pooled.  It exercises the
 * whole pipeline contract (dims, ids, file format, determinism) and can be
 * swapped for a real model by implementing EmbeddingBackend.
 *
 * Class vectors are the exception: they come from a real word-vector table
 * in the standard word2vec text format, because the out-of-vocabulary
 * behavior (classes without embeddings get dropped) is part of the
 * pipeline's contract.
 */

import * as fs from 'node:fs'

export interface EmbeddingBackend {
  name: string
  dim: number
  /** Mean of per-token vectors; null when no token is in vocabulary. */
  embedTokens(tokens: string[]): Float32Array | null
}

export function fnv1a(data: string | Uint8Array): number {
  let h = 0x811c9dc5
  if (typeof data === 'string') {
    for (let i = 0; i < data.length; i++) {
      h ^= data.charCodeAt(i)
      h = Math.imul(h, 0x01000193)
    }
  } else {
    for (let i = 0; i < data.length; i++) {
      h ^= data[i]
      h = Math.imul(h, 0x01000193)
    }
  }
  return h >>> 0
}

/** mulberry32: tiny deterministic PRNG seeded from a 32-bit hash. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0
  return () => {
    a = (a + 0x6d2b79f5) >>> 0
    let t = a
    t = Math.imul(t ^ (t >>> 15), t | 1)
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61)
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296
  }
}

export function hashVector(seedKey: string | Uint8Array, dim: number): Float32Array {
  const rand = mulberry32(fnv1a(seedKey))
  const out = new Float32Array(dim)
  for (let i = 0; i < dim; i++) {
    // approximate unit-variance gaussian from 4 uniforms
    out[i] = (rand() + rand() + rand() + rand() - 2) * Math.sqrt(3)
  }
  return out
}

function meanPool(vectors: Float32Array[], dim: number): Float32Array {
  const out = new Float32Array(dim)
  for (const v of vectors) {
    for (let i = 0; i < dim; i++) out[i] += v[i]
  }
  for (let i = 0; i < dim; i++) out[i] /= vectors.length
  return out
}

export function hashBackend(dim: number): EmbeddingBackend {
  return {
    name: 'hash-v1',
    dim,
    embedTokens(tokens) {
      if (tokens.length === 0) return null
      return meanPool(tokens.map(t => hashVector(t, dim)), dim)
    },
  }
}

/**
 * Word-vector table in the word2vec text format: a "count dim" header line
 * followed by "token v1 v2 ... v<dim>" lines.
 */
export function loadWordVectors(path: string): EmbeddingBackend {
  const lines = fs.readFileSync(path, 'utf-8').split('\n')
  const header = lines[0].trim().split(/\s+/)
  if (header.length !== 2) {
    throw new Error(`${path}: expected "count dim" header, got ${JSON.stringify(lines[0])}`)
  }
  const dim = Number(header[1])
  if (!Number.isInteger(dim) || dim <= 0) {
    throw new Error(`${path}: bad dim in header`)
  }
  const vocab = new Map<string, Float32Array>()
  for (let i = 1; i < lines.length; i++) {
    const line = lines[i].trim()
    if (!line) continue
    const parts = line.split(/\s+/)
    if (parts.length !== dim + 1) {
      throw new Error(`${path}: line ${i + 1} has ${parts.length - 1} values, expected ${dim}`)
    }
    vocab.set(parts[0], Float32Array.from(parts.slice(1), Number))
  }
  return {
    name: `word2vec:${path}`,
    dim,
    embedTokens(tokens) {
      const hits = tokens.map(t => vocab.get(t)).filter((v): v is Float32Array => !!v)
      if (hits.length === 0) return null
      return meanPool(hits, dim)
    },
  }
}
