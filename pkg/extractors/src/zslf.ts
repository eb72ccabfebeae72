/**
 * ZSLF embedding files: id-keyed float32 vectors, little-endian.
 *
 * Layout: magic "ZSLF", u32 version=1, u32 record count, u32 dim, then per
 * record a u16 id byte length, the UTF-8 id, and dim float32 values.
 * This must stay byte-compatible with the training pipeline's loader.
 */

export const MAGIC = 'ZSLF'
export const VERSION = 1

const HEADER_BYTES = 16

export interface FeatureRecord {
  id: string
  vector: Float32Array
}

export interface FeatureTable {
  dim: number
  records: FeatureRecord[]
}

export class ZslfError extends Error {}

export function encodeZslf(table: FeatureTable): Buffer {
  if (table.dim <= 0) {
    throw new ZslfError(`dim must be positive, got ${table.dim}`)
  }
  const seen = new Set<string>()
  for (const rec of table.records) {
    if (seen.has(rec.id)) {
      throw new ZslfError(`duplicate id: ${rec.id}`)
    }
    seen.add(rec.id)
    if (rec.vector.length !== table.dim) {
      throw new ZslfError(
        `record ${rec.id} has ${rec.vector.length} values, expected ${table.dim}`,
      )
    }
  }

  const chunks: Buffer[] = []
  const header = Buffer.alloc(HEADER_BYTES)
  header.write(MAGIC, 0, 'ascii')
  header.writeUInt32LE(VERSION, 4)
  header.writeUInt32LE(table.records.length, 8)
  header.writeUInt32LE(table.dim, 12)
  chunks.push(header)

  for (const rec of table.records) {
    const idBytes = Buffer.from(rec.id, 'utf-8')
    if (idBytes.length > 0xffff) {
      throw new ZslfError(`id too long for u16 length field: ${rec.id.slice(0, 40)}...`)
    }
    const lenBuf = Buffer.alloc(2)
    lenBuf.writeUInt16LE(idBytes.length, 0)
    const vecBuf = Buffer.alloc(4 * table.dim)
    const view = new DataView(vecBuf.buffer, vecBuf.byteOffset, vecBuf.byteLength)
    for (let i = 0; i < table.dim; i++) {
      view.setFloat32(4 * i, rec.vector[i], true)
    }
    chunks.push(lenBuf, idBytes, vecBuf)
  }
  return Buffer.concat(chunks)
}

export function decodeZslf(data: Buffer): FeatureTable {
  if (data.length < HEADER_BYTES) {
    throw new ZslfError('file shorter than the 16-byte header')
  }
  if (data.toString('ascii', 0, 4) !== MAGIC) {
    throw new ZslfError(`bad magic ${JSON.stringify(data.toString('ascii', 0, 4))}`)
  }
  const version = data.readUInt32LE(4)
  if (version !== VERSION) {
    throw new ZslfError(`unsupported version ${version}`)
  }
  const count = data.readUInt32LE(8)
  const dim = data.readUInt32LE(12)
  if (dim === 0) {
    throw new ZslfError('header dim must be positive')
  }

  const records: FeatureRecord[] = []
  const seen = new Set<string>()
  let offset = HEADER_BYTES
  for (let i = 0; i < count; i++) {
    if (offset + 2 > data.length) {
      throw new ZslfError(`truncated at record ${i} (id length)`)
    }
    const idLen = data.readUInt16LE(offset)
    offset += 2
    if (offset + idLen + 4 * dim > data.length) {
      throw new ZslfError(`truncated at record ${i} (payload)`)
    }
    const id = data.toString('utf-8', offset, offset + idLen)
    offset += idLen
    const vector = new Float32Array(dim)
    const view = new DataView(data.buffer, data.byteOffset + offset, 4 * dim)
    for (let j = 0; j < dim; j++) {
      vector[j] = view.getFloat32(4 * j, true)
    }
    offset += 4 * dim
    if (seen.has(id)) {
      throw new ZslfError(`duplicate id: ${id}`)
    }
    seen.add(id)
    records.push({ id, vector })
  }
  if (offset !== data.length) {
    throw new ZslfError(`${data.length - offset} trailing bytes after last record`)
  }
  return { dim, records }
}
