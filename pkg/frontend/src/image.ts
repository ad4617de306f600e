/**
 * Grayscale image loading: 8/16-bit PNG (color type 0, non-interlaced) and
 * binary PGM (P5). Intensities are normalized to [0, 1].
 */

import { readFileSync } from 'node:fs'
import { inflateSync } from 'node:zlib'

export interface GrayImage {
  height: number
  width: number
  /** row-major, [0, 1] */
  pixels: Float32Array
}

export class ImageFormatError extends Error {}

const PNG_SIGNATURE = Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a])

export function loadGrayImage(path: string): GrayImage {
  const buf = readFileSync(path)
  if (buf.subarray(0, 8).equals(PNG_SIGNATURE)) return decodeGrayPng(buf)
  if (buf[0] === 0x50 && buf[1] === 0x35) return decodePgm(buf) // "P5"
  throw new ImageFormatError(`${path}: expected grayscale PNG or binary PGM`)
}

export function decodeGrayPng(buf: Buffer): GrayImage {
  if (!buf.subarray(0, 8).equals(PNG_SIGNATURE)) {
    throw new ImageFormatError('not a PNG file')
  }
  let width = 0
  let height = 0
  let bitDepth = 0
  const idat: Buffer[] = []
  let offset = 8
  while (offset + 8 <= buf.length) {
    const length = buf.readUInt32BE(offset)
    const type = buf.toString('ascii', offset + 4, offset + 8)
    const data = buf.subarray(offset + 8, offset + 8 + length)
    if (type === 'IHDR') {
      width = data.readUInt32BE(0)
      height = data.readUInt32BE(4)
      bitDepth = data[8]
      const colorType = data[9]
      const interlace = data[12]
      if (colorType !== 0) {
        throw new ImageFormatError(
          `unsupported PNG color type ${colorType}: only grayscale (0) is handled`,
        )
      }
      if (bitDepth !== 8 && bitDepth !== 16) {
        throw new ImageFormatError(`unsupported PNG bit depth ${bitDepth}`)
      }
      if (interlace !== 0) throw new ImageFormatError('interlaced PNG not supported')
    } else if (type === 'IDAT') {
      idat.push(data)
    } else if (type === 'IEND') {
      break
    }
    offset += 12 + length // length + type + payload + crc
  }
  if (width < 1 || height < 1) throw new ImageFormatError('missing or bad IHDR')
  if (idat.length === 0) throw new ImageFormatError('no IDAT chunks')

  const raw = inflateSync(Buffer.concat(idat))
  const bpp = bitDepth / 8
  const stride = width * bpp
  if (raw.length < height * (stride + 1)) {
    throw new ImageFormatError('truncated PNG pixel data')
  }

  // undo per-row filters (None, Sub, Up, Average, Paeth)
  const bytes = Buffer.alloc(height * stride)
  for (let y = 0; y < height; y++) {
    const filter = raw[y * (stride + 1)]
    const rowIn = raw.subarray(y * (stride + 1) + 1, y * (stride + 1) + 1 + stride)
    const rowOut = bytes.subarray(y * stride, (y + 1) * stride)
    const prev = y > 0 ? bytes.subarray((y - 1) * stride, y * stride) : null
    for (let x = 0; x < stride; x++) {
      const a = x >= bpp ? rowOut[x - bpp] : 0
      const b = prev ? prev[x] : 0
      const c = prev && x >= bpp ? prev[x - bpp] : 0
      let v = rowIn[x]
      switch (filter) {
        case 0:
          break
        case 1:
          v += a
          break
        case 2:
          v += b
          break
        case 3:
          v += (a + b) >> 1
          break
        case 4: {
          const p = a + b - c
          const pa = Math.abs(p - a)
          const pb = Math.abs(p - b)
          const pc = Math.abs(p - c)
          v += pa <= pb && pa <= pc ? a : pb <= pc ? b : c
          break
        }
        default:
          throw new ImageFormatError(`unknown PNG filter ${filter} on row ${y}`)
      }
      rowOut[x] = v & 0xff
    }
  }

  const pixels = new Float32Array(width * height)
  if (bitDepth === 8) {
    for (let i = 0; i < pixels.length; i++) pixels[i] = bytes[i] / 255
  } else {
    for (let i = 0; i < pixels.length; i++) pixels[i] = bytes.readUInt16BE(i * 2) / 65535
  }
  return { height, width, pixels }
}

export function decodePgm(buf: Buffer): GrayImage {
  const tokens: string[] = []
  let i = 0
  while (tokens.length < 4) {
    if (i >= buf.length) throw new ImageFormatError('truncated PGM header')
    const ch = String.fromCharCode(buf[i])
    if (ch === '#') {
      while (i < buf.length && buf[i] !== 0x0a) i++
    } else if (/\s/.test(ch)) {
      i++
    } else {
      let j = i
      while (j < buf.length && !/\s/.test(String.fromCharCode(buf[j]))) j++
      tokens.push(buf.toString('ascii', i, j))
      i = j
    }
  }
  i++ // single whitespace after maxval
  if (tokens[0] !== 'P5') throw new ImageFormatError(`expected P5 magic, got ${tokens[0]}`)
  const width = parseInt(tokens[1], 10)
  const height = parseInt(tokens[2], 10)
  const maxval = parseInt(tokens[3], 10)
  if (!(width >= 1 && height >= 1 && maxval > 0 && maxval < 65536)) {
    throw new ImageFormatError('bad PGM dimensions or maxval')
  }
  const wide = maxval > 255
  const need = width * height * (wide ? 2 : 1)
  if (buf.length < i + need) throw new ImageFormatError('truncated PGM payload')
  const pixels = new Float32Array(width * height)
  for (let p = 0; p < pixels.length; p++) {
    const v = wide ? buf.readUInt16BE(i + p * 2) : buf[i + p]
    pixels[p] = v / maxval
  }
  return { height, width, pixels }
}

export function encodePgm(img: GrayImage, maxval = 255): Buffer {
  const header = Buffer.from(`P5\n${img.width} ${img.height}\n${maxval}\n`, 'ascii')
  const wide = maxval > 255
  const body = Buffer.alloc(img.pixels.length * (wide ? 2 : 1))
  for (let i = 0; i < img.pixels.length; i++) {
    const v = Math.max(0, Math.min(maxval, Math.round(img.pixels[i] * maxval)))
    if (wide) body.writeUInt16BE(v, i * 2)
    else body[i] = v
  }
  return Buffer.concat([header, body])
}
