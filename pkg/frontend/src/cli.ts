#!/usr/bin/env node
/**
 * extract-features --image dapi.png --patch 64 --stride 32 --out morph.sft
 *
 * Embeds sliding tiles of a grayscale stain image with a ResNet18 backbone
 * and writes the rows x cols x 512 result as an SFT tensor.
 */

import { pathToFileURL } from 'node:url'
import { DEFAULT_WEIGHTS_ID } from './model.js'
import { extractFeatures } from './extract.js'

const USAGE = `usage: extract-features --image <png|pgm> --out <file.sft>
                        [--patch 64] [--stride 32] [--batch 8]
                        [--weights ${DEFAULT_WEIGHTS_ID}|<model.json>|random:<seed>]`

interface CliArgs {
  image: string
  out: string
  patch: number
  stride: number
  batch: number
  weights: string
}

export function parseArgs(argv: string[]): CliArgs {
  const args: Record<string, string> = {}
  for (let i = 0; i < argv.length; i += 2) {
    const flag = argv[i]
    const value = argv[i + 1]
    if (!flag.startsWith('--') || value === undefined) {
      throw new Error(`bad argument ${flag}`)
    }
    args[flag.slice(2)] = value
  }
  const known = new Set(['image', 'out', 'patch', 'stride', 'batch', 'weights'])
  for (const key of Object.keys(args)) {
    if (!known.has(key)) throw new Error(`unknown flag --${key}`)
  }
  for (const required of ['image', 'out']) {
    if (!(required in args)) throw new Error(`missing required flag --${required}`)
  }
  const int = (key: string, fallback: number) => {
    if (!(key in args)) return fallback
    const v = parseInt(args[key], 10)
    if (!Number.isInteger(v)) throw new Error(`--${key} must be an integer`)
    return v
  }
  return {
    image: args.image,
    out: args.out,
    patch: int('patch', 64),
    stride: int('stride', 32),
    batch: int('batch', 8),
    weights: args.weights ?? DEFAULT_WEIGHTS_ID,
  }
}

export async function main(argv: string[]): Promise<number> {
  let args: CliArgs
  try {
    args = parseArgs(argv)
  } catch (err) {
    console.error(`usage error: ${(err as Error).message}\n${USAGE}`)
    return 1
  }
  try {
    const { grid } = await extractFeatures({
      imagePath: args.image,
      outPath: args.out,
      patch: args.patch,
      stride: args.stride,
      batchSize: args.batch,
      weights: args.weights,
    })
    console.log(`wrote ${grid.rows}x${grid.cols}x512 embeddings to ${args.out}`)
    return 0
  } catch (err) {
    console.error(`error: ${(err as Error).message}`)
    return 2
  }
}

const invokedDirectly =
  process.argv[1] !== undefined && import.meta.url === pathToFileURL(process.argv[1]).href

if (invokedDirectly) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code
  })
}
