import { describe, expect, it } from 'vitest'

import { decodeZslf, encodeZslf, ZslfError } from '../src/zslf.js'

function handBuiltBytes(): Buffer {
  // magic, u32 version, u32 count=2, u32 dim=3, then the two records
  const buf = Buffer.alloc(16 + (2 + 1 + 12) + (2 + 2 + 12))
  let o = 0
  buf.write('ZSLF', o, 'ascii'); o += 4
  buf.writeUInt32LE(1, o); o += 4
  buf.writeUInt32LE(2, o); o += 4
  buf.writeUInt32LE(3, o); o += 4
  buf.writeUInt16LE(1, o); o += 2
  buf.write('a', o, 'ascii'); o += 1
  for (const v of [1, 2, 3]) { buf.writeFloatLE(v, o); o += 4 }
  buf.writeUInt16LE(2, o); o += 2
  buf.write('bc', o, 'ascii'); o += 2
  for (const v of [4, 5, 6]) { buf.writeFloatLE(v, o); o += 4 }
  return buf
}

describe('zslf codec', () => {
  it('decodes a hand-built file', () => {
    const table = decodeZslf(handBuiltBytes())
    expect(table.dim).toBe(3)
    expect(table.records.map(r => r.id)).toEqual(['a', 'bc'])
    expect(Array.from(table.records[0].vector)).toEqual([1, 2, 3])
    expect(Array.from(table.records[1].vector)).toEqual([4, 5, 6])
  })

  it('encodes to the exact hand-built bytes', () => {
    const table = {
      dim: 3,
      records: [
        { id: 'a', vector: Float32Array.from([1, 2, 3]) },
        { id: 'bc', vector: Float32Array.from([4, 5, 6]) },
      ],
    }
    expect(encodeZslf(table).equals(handBuiltBytes())).toBe(true)
  })

  it('round-trips random tables byte-exactly', () => {
    for (let trial = 0; trial < 5; trial++) {
      const dim = 1 + trial * 7
      const records = Array.from({ length: 10 }, (_, i) => ({
        id: `rec_${trial}_${i}_λ`,
        vector: Float32Array.from({ length: dim }, (_, j) => Math.sin(i * 31 + j) * 10),
      }))
      const bytes = encodeZslf({ dim, records })
      const decoded = decodeZslf(bytes)
      expect(encodeZslf(decoded).equals(bytes)).toBe(true)
    }
  })

  it('rejects bad magic and version', () => {
    const bad = handBuiltBytes()
    bad.write('XXXX', 0, 'ascii')
    expect(() => decodeZslf(bad)).toThrow(ZslfError)
    const badVersion = handBuiltBytes()
    badVersion.writeUInt32LE(9, 4)
    expect(() => decodeZslf(badVersion)).toThrow(/version/)
  })

  it('rejects truncated payloads and trailing bytes', () => {
    const bytes = handBuiltBytes()
    expect(() => decodeZslf(bytes.subarray(0, bytes.length - 5))).toThrow(/truncated/)
    expect(() => decodeZslf(Buffer.concat([bytes, Buffer.from([0])]))).toThrow(/trailing/)
  })

  it('rejects duplicate ids on both paths', () => {
    const rec = { id: 'same', vector: Float32Array.from([0]) }
    expect(() => encodeZslf({ dim: 1, records: [rec, rec] })).toThrow(/duplicate/)
    const table = {
      dim: 1,
      records: [
        { id: 'x', vector: Float32Array.from([0]) },
        { id: 'y', vector: Float32Array.from([0]) },
      ],
    }
    const bytes = encodeZslf(table)
    // overwrite the second id byte to collide with the first
    bytes.write('x', 16 + 2 + 1 + 4 + 2, 'ascii')
    expect(() => decodeZslf(bytes)).toThrow(/duplicate/)
  })

  it('rejects dimension mismatches', () => {
    expect(() =>
      encodeZslf({ dim: 2, records: [{ id: 'a', vector: Float32Array.from([1]) }] }),
    ).toThrow(/expected 2/)
  })
})
