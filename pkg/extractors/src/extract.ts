/**
 * The three extraction jobs.  Each turns raw inputs into one ZSLF file plus
 * a JSON sidecar {skipped, dim, count, model, notes} describing what was
 * dropped and which backend produced the vectors.
 */

import * as fs from 'node:fs'
import * as path from 'node:path'

import { EmbeddingBackend, hashBackend, hashVector, loadWordVectors } from './backends.js'
import { classNameTokens, preprocess } from './preprocess.js'
import { FeatureRecord, encodeZslf } from './zslf.js'

export const VISUAL_DIM = 4096
export const TEXT_DIM = 1024
export const CLASS_DIM = 300

export interface Sidecar {
  skipped: string[]
  dim: number
  count: number
  model: string
  notes: string
}

export interface ExtractionResult {
  outPath: string
  sidecar: Sidecar
}

const IMAGE_MAGIC: Array<[string, number[]]> = [
  ['png', [0x89, 0x50, 0x4e, 0x47]],
  ['jpeg', [0xff, 0xd8, 0xff]],
  ['gif', [0x47, 0x49, 0x46, 0x38]],
  ['bmp', [0x42, 0x4d]],
]

export function isDecodableImage(data: Buffer): boolean {
  return IMAGE_MAGIC.some(([, magic]) => magic.every((b, i) => data[i] === b))
}

function stem(file: string): string {
  return path.basename(file, path.extname(file))
}

function listFiles(dir: string): string[] {
  return fs
    .readdirSync(dir)
    .filter(f => fs.statSync(path.join(dir, f)).isFile())
    .sort()
}

function writeOutputs(
  outPath: string,
  dim: number,
  records: FeatureRecord[],
  skipped: string[],
  model: string,
  notes: string,
): ExtractionResult {
  fs.mkdirSync(path.dirname(path.resolve(outPath)), { recursive: true })
  fs.writeFileSync(outPath, encodeZslf({ dim, records }))
  const sidecar: Sidecar = { skipped, dim, count: records.length, model, notes }
  fs.writeFileSync(`${outPath}.json`, JSON.stringify(sidecar, null, 2) + '\n')
  return { outPath, sidecar }
}

/** One 4096-dim record per decodable image, id = file stem. */
export function extractImages(inDir: string, outPath: string, dim = VISUAL_DIM): ExtractionResult {
  const records: FeatureRecord[] = []
  const skipped: string[] = []
  for (const file of listFiles(inDir)) {
    const data = fs.readFileSync(path.join(inDir, file))
    if (!isDecodableImage(data)) {
      console.warn(`skipping undecodable image: ${file}`)
      skipped.push(file)
      continue
    }
    records.push({ id: stem(file), vector: hashVector(data, dim) })
  }
  return writeOutputs(
    outPath, dim, records, skipped,
    'hash-v1',
    'content-hash stand-in for a pretrained CNN penultimate layer',
  )
}

/** One 1024-dim record per UTF-8 text document, id = file stem. */
export function extractTexts(inDir: string, outPath: string, dim = TEXT_DIM): ExtractionResult {
  const backend = hashBackend(dim)
  const records: FeatureRecord[] = []
  const empty: string[] = []
  for (const file of listFiles(inDir)) {
    const tokens = preprocess(fs.readFileSync(path.join(inDir, file), 'utf-8'))
    const vector = backend.embedTokens(tokens)
    if (vector === null) {
      console.warn(`document empty after cleaning, writing zero vector: ${file}`)
      empty.push(file)
      records.push({ id: stem(file), vector: new Float32Array(dim) })
      continue
    }
    records.push({ id: stem(file), vector })
  }
  const notes =
    'lowercase + punctuation strip + suffix lemmatization, mean of token vectors' +
    (empty.length ? `; zero vectors for empty docs: ${empty.join(', ')}` : '')
  return writeOutputs(outPath, dim, records, [], backend.name, notes)
}

/**
 * One 300-dim record per class name with at least one in-vocabulary token
 * (multi-word names are averaged over their in-vocabulary tokens); classes
 * whose tokens are all out of vocabulary are omitted and reported.
 */
export function extractClasses(
  namesFile: string,
  outPath: string,
  vectorsFile: string,
  dim = CLASS_DIM,
): ExtractionResult {
  const backend: EmbeddingBackend = loadWordVectors(vectorsFile)
  if (backend.dim !== dim) {
    throw new Error(`word vectors are ${backend.dim}-dim, expected ${dim}`)
  }
  const names = fs
    .readFileSync(namesFile, 'utf-8')
    .split('\n')
    .map(l => l.trim())
    .filter(l => l.length > 0)
  const records: FeatureRecord[] = []
  const skipped: string[] = []
  for (const name of names) {
    const vector = backend.embedTokens(classNameTokens(name))
    if (vector === null) {
      console.warn(`no embedding for class: ${name}`)
      skipped.push(name)
      continue
    }
    records.push({ id: name, vector })
  }
  if (records.length === 0) {
    throw new Error('every class is out of vocabulary')
  }
  return writeOutputs(
    outPath, dim, records, skipped,
    backend.name,
    'mean of in-vocabulary word vectors per class name',
  )
}
