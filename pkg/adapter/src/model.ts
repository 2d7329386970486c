/**
 * Image-network loading and penultimate-layer feature extraction.
 *
 * Any tfjs layers model whose second-to-last dense layer has 4096 units can
 * serve as the feature network (the classic fc-7-style layer of VGG-family
 * classifiers). Models are stored on disk as model.json + weights.bin; a
 * seeded stub builder produces a small deterministic network with the same
 * interface for offline use and tests.
 */

import * as fs from 'node:fs'
import * as path from 'node:path'
import * as tf from '@tensorflow/tfjs'

export const FEATURE_DIM = 4096

export class ModelError extends Error {}

export async function saveModel(model: tf.LayersModel, dir: string): Promise<void> {
  fs.mkdirSync(dir, { recursive: true })
  await model.save(
    tf.io.withSaveHandler(async (artifacts) => {
      const weightData = artifacts.weightData as ArrayBuffer
      const manifest = {
        modelTopology: artifacts.modelTopology,
        format: 'layers-model',
        weightsManifest: [
          { paths: ['weights.bin'], weights: artifacts.weightSpecs },
        ],
      }
      fs.writeFileSync(path.join(dir, 'model.json'), JSON.stringify(manifest))
      fs.writeFileSync(path.join(dir, 'weights.bin'), Buffer.from(weightData))
      return {
        modelArtifactsInfo: {
          dateSaved: new Date(0),
          modelTopologyType: 'JSON',
        },
      }
    }),
  )
}

export async function loadModel(dir: string): Promise<tf.LayersModel> {
  const manifestPath = path.join(dir, 'model.json')
  if (!fs.existsSync(manifestPath)) {
    throw new ModelError(
      `no model at ${dir}: expected model.json + weights.bin. ` +
      'Provide a tfjs layers model with a 4096-unit penultimate dense layer ' +
      '(e.g. a converted VGG16 classifier), or build a deterministic stub ' +
      'with `make-stub-model`.',
    )
  }
  const manifest = JSON.parse(fs.readFileSync(manifestPath, 'utf-8'))
  const weightPath = path.join(dir, manifest.weightsManifest[0].paths[0])
  if (!fs.existsSync(weightPath)) {
    throw new ModelError(`model weights missing: ${weightPath}`)
  }
  const weightData = fs.readFileSync(weightPath)
  return tf.loadLayersModel({
    load: async () => ({
      modelTopology: manifest.modelTopology,
      weightSpecs: manifest.weightsManifest[0].weights,
      weightData: weightData.buffer.slice(
        weightData.byteOffset,
        weightData.byteOffset + weightData.byteLength,
      ),
    }),
  })
}

export interface FeatureExtractor {
  /** Sub-model ending at the 4096-unit penultimate dense layer. */
  submodel: tf.LayersModel
  inputSize: number
}

export function featureExtractor(model: tf.LayersModel): FeatureExtractor {
  const dense = model.layers.filter((l) => l.getClassName() === 'Dense')
  if (dense.length < 2) {
    throw new ModelError('model needs at least two dense layers (features + head)')
  }
  const feat = dense[dense.length - 2]
  const units = (feat.getConfig() as { units?: number }).units
  if (units !== FEATURE_DIM) {
    throw new ModelError(
      `penultimate dense layer has ${units} units, expected ${FEATURE_DIM}`,
    )
  }
  const submodel = tf.model({
    inputs: model.inputs,
    outputs: feat.output as tf.SymbolicTensor,
  })
  const shape = model.inputs[0].shape // [null, H, W, 3]
  const inputSize = shape[1] as number
  if (!(inputSize > 0) || shape[1] !== shape[2] || shape[3] !== 3) {
    throw new ModelError(`model input must be square RGB, got ${JSON.stringify(shape)}`)
  }
  return { submodel, inputSize }
}

/**
 * Small deterministic conv net with the canonical 4096-unit penultimate
 * layer. Weights depend only on the seed.
 */
export function makeStubModel(seed: number, inputSize = 64): tf.LayersModel {
  const init = (offset: number) => tf.initializers.glorotUniform({ seed: seed + offset })
  const model = tf.sequential()
  model.add(tf.layers.conv2d({
    inputShape: [inputSize, inputSize, 3],
    filters: 8,
    kernelSize: 5,
    strides: 4,
    activation: 'relu',
    kernelInitializer: init(1),
  }))
  model.add(tf.layers.globalAveragePooling2d({}))
  model.add(tf.layers.dense({ units: 64, activation: 'relu', kernelInitializer: init(2) }))
  model.add(tf.layers.dense({ units: FEATURE_DIM, activation: 'tanh', kernelInitializer: init(3) }))
  model.add(tf.layers.dense({ units: 7, activation: 'softmax', kernelInitializer: init(4) }))
  return model
}
