/**
 * SFT binary tensor format, the interchange surface with the main pipeline.
 *
 * Layout: 4-byte magic "SFT1"; four little-endian u32 (height, width,
 * channels, nameTableLen); nameTableLen bytes of UTF-8 channel names joined
 * by LF (empty table = unnamed channels); then height*width*channels
 * little-endian float32, row-major, channel-last.
 */

const MAGIC = 'SFT1'
const HEADER_BYTES = 20

export interface FeatureTensor {
  height: number
  width: number
  channels: number
  channelNames: string[]
  /** row-major, channel-last: index = (y * width + x) * channels + c */
  data: Float32Array
}

export class SftFormatError extends Error {}

export function encodeSft(t: FeatureTensor): Buffer {
  const { height, width, channels } = t
  for (const [dim, name] of [
    [height, 'height'],
    [width, 'width'],
    [channels, 'channels'],
  ] as [number, string][]) {
    if (!Number.isInteger(dim) || dim < 1 || dim > 0xffffffff) {
      throw new SftFormatError(`${name}=${dim} outside u32 range`)
    }
  }
  if (t.data.length !== height * width * channels) {
    throw new SftFormatError(
      `data length ${t.data.length} != ${height}*${width}*${channels}`,
    )
  }
  for (const name of t.channelNames) {
    if (name.includes('\n')) {
      throw new SftFormatError(`channel name ${JSON.stringify(name)} contains LF`)
    }
  }
  const allBlank = t.channelNames.every((n) => n === '')
  const table = allBlank ? Buffer.alloc(0) : Buffer.from(t.channelNames.join('\n'), 'utf-8')

  const out = Buffer.alloc(HEADER_BYTES + table.length + t.data.length * 4)
  out.write(MAGIC, 0, 'ascii')
  out.writeUInt32LE(height, 4)
  out.writeUInt32LE(width, 8)
  out.writeUInt32LE(channels, 12)
  out.writeUInt32LE(table.length, 16)
  table.copy(out, HEADER_BYTES)
  let offset = HEADER_BYTES + table.length
  for (let i = 0; i < t.data.length; i++, offset += 4) {
    const v = t.data[i]
    if (!Number.isFinite(v)) {
      throw new SftFormatError(`non-finite value at flat index ${i}`)
    }
    out.writeFloatLE(v, offset)
  }
  return out
}

export function decodeSft(buf: Buffer): FeatureTensor {
  if (buf.length < HEADER_BYTES) throw new SftFormatError('truncated SFT header')
  if (buf.toString('ascii', 0, 4) !== MAGIC) {
    throw new SftFormatError(`bad magic ${JSON.stringify(buf.toString('ascii', 0, 4))}`)
  }
  const height = buf.readUInt32LE(4)
  const width = buf.readUInt32LE(8)
  const channels = buf.readUInt32LE(12)
  const tableLen = buf.readUInt32LE(16)
  if (height < 1 || width < 1 || channels < 1) {
    throw new SftFormatError(`zero dimension (${height}, ${width}, ${channels})`)
  }
  if (buf.length < HEADER_BYTES + tableLen) {
    throw new SftFormatError('truncated channel name table')
  }
  const channelNames =
    tableLen === 0
      ? new Array<string>(channels).fill('')
      : buf.toString('utf-8', HEADER_BYTES, HEADER_BYTES + tableLen).split('\n')
  if (channelNames.length !== channels) {
    throw new SftFormatError(`${channelNames.length} channel names for ${channels} channels`)
  }
  const count = height * width * channels
  const start = HEADER_BYTES + tableLen
  if (buf.length < start + count * 4) {
    throw new SftFormatError(
      `truncated payload: need ${count * 4} bytes, have ${buf.length - start}`,
    )
  }
  if (buf.length > start + count * 4) {
    throw new SftFormatError('trailing bytes after payload')
  }
  const data = new Float32Array(count)
  for (let i = 0; i < count; i++) data[i] = buf.readFloatLE(start + i * 4)
  return { height, width, channels, channelNames, data }
}
