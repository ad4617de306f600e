/**
 * ResNet18 backbone producing 512-d tile embeddings (global average pool,
 * no classification head), built with tf.layers so converted checkpoints
 * can be loaded by name.
 */

import { existsSync, readFileSync } from 'node:fs'
import { dirname, join, resolve } from 'node:path'
import * as tf from '@tensorflow/tfjs'

export const EMBEDDING_DIM = 512
export const DEFAULT_WEIGHTS_ID = 'simclr-resnet18-v1'

const STAGES: Array<[filters: number, stride: number]> = [
  [64, 1],
  [64, 1],
  [128, 2],
  [128, 1],
  [256, 2],
  [256, 1],
  [512, 2],
  [512, 1],
]

class SeedStream {
  private counter = 0
  constructor(private readonly base: number) {}
  next(): number {
    this.counter += 1
    return this.base * 10_000 + this.counter
  }
}

function basicBlock(
  x: tf.SymbolicTensor,
  filters: number,
  stride: number,
  seeds: SeedStream,
  name: string,
): tf.SymbolicTensor {
  const conv = (input: tf.SymbolicTensor, kernel: number, s: number, suffix: string) =>
    tf.layers
      .conv2d({
        filters,
        kernelSize: kernel,
        strides: s,
        padding: 'same',
        useBias: false,
        kernelInitializer: tf.initializers.glorotUniform({ seed: seeds.next() }),
        name: `${name}_${suffix}`,
      })
      .apply(input) as tf.SymbolicTensor

  let out = conv(x, 3, stride, 'conv1')
  out = tf.layers.batchNormalization({ name: `${name}_bn1` }).apply(out) as tf.SymbolicTensor
  out = tf.layers.reLU().apply(out) as tf.SymbolicTensor
  out = conv(out, 3, 1, 'conv2')
  out = tf.layers.batchNormalization({ name: `${name}_bn2` }).apply(out) as tf.SymbolicTensor

  let shortcut = x
  if (stride !== 1 || x.shape[x.shape.length - 1] !== filters) {
    shortcut = conv(x, 1, stride, 'proj')
    shortcut = tf.layers
      .batchNormalization({ name: `${name}_bnproj` })
      .apply(shortcut) as tf.SymbolicTensor
  }
  const added = tf.layers.add().apply([out, shortcut]) as tf.SymbolicTensor
  return tf.layers.reLU().apply(added) as tf.SymbolicTensor
}

export function buildResnet18(patch: number, seed = 0): tf.LayersModel {
  const seeds = new SeedStream(seed)
  const input = tf.input({ shape: [patch, patch, 3], name: 'tile' })
  let x = tf.layers
    .conv2d({
      filters: 64,
      kernelSize: 7,
      strides: 2,
      padding: 'same',
      useBias: false,
      kernelInitializer: tf.initializers.glorotUniform({ seed: seeds.next() }),
      name: 'stem_conv',
    })
    .apply(input) as tf.SymbolicTensor
  x = tf.layers.batchNormalization({ name: 'stem_bn' }).apply(x) as tf.SymbolicTensor
  x = tf.layers.reLU().apply(x) as tf.SymbolicTensor
  x = tf.layers
    .maxPooling2d({ poolSize: 3, strides: 2, padding: 'same' })
    .apply(x) as tf.SymbolicTensor
  STAGES.forEach(([filters, stride], i) => {
    x = basicBlock(x, filters, stride, seeds, `block${i + 1}`)
  })
  x = tf.layers.globalAveragePooling2d({ name: 'embedding' }).apply(x) as tf.SymbolicTensor
  return tf.model({ inputs: input, outputs: x, name: 'resnet18_embed' })
}

/** Load a tfjs layers-model (model.json + weight shards) from disk. */
export async function loadModelFromFile(modelJsonPath: string): Promise<tf.LayersModel> {
  const dir = dirname(resolve(modelJsonPath))
  const manifest = JSON.parse(readFileSync(modelJsonPath, 'utf-8'))
  const weightSpecs: tf.io.WeightsManifestEntry[] = []
  const shards: Buffer[] = []
  for (const group of manifest.weightsManifest ?? []) {
    weightSpecs.push(...group.weights)
    for (const path of group.paths) shards.push(readFileSync(join(dir, path)))
  }
  const weightData = new Uint8Array(Buffer.concat(shards)).buffer
  return tf.loadLayersModel({
    load: async () => ({
      modelTopology: manifest.modelTopology,
      weightSpecs,
      weightData,
    }),
  })
}

function weightsSearchPaths(id: string): string[] {
  const names = [`${id}.json`, join(id, 'model.json')]
  const roots = ['.', process.env.SEFI_WEIGHTS_DIR ?? 'weights']
  const paths: string[] = []
  for (const root of roots) for (const name of names) paths.push(join(root, name))
  return paths
}

/**
 * Resolve a weights argument to a ready model:
 *   - "random:<seed>"  deterministic seeded initialization (no checkpoint)
 *   - a path to a tfjs model.json
 *   - a checkpoint id searched under ./ and $SEFI_WEIGHTS_DIR
 */
export async function resolveModel(weights: string, patch: number): Promise<tf.LayersModel> {
  const randomMatch = /^random:(\d+)$/.exec(weights)
  if (randomMatch) return buildResnet18(patch, parseInt(randomMatch[1], 10))
  if (weights.endsWith('.json') && existsSync(weights)) return loadModelFromFile(weights)
  for (const candidate of weightsSearchPaths(weights)) {
    if (existsSync(candidate)) return loadModelFromFile(candidate)
  }
  throw new Error(
    `weights '${weights}' not found: download a tfjs-converted checkpoint and ` +
      `pass its model.json path (or place it under $SEFI_WEIGHTS_DIR), ` +
      `or use --weights random:<seed> for seeded random weights`,
  )
}
