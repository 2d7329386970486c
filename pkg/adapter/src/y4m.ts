/**
 * Minimal YUV4MPEG2 (.y4m) decoder.
 *
 * Y4M is uncompressed: a text header, then per frame a "FRAME" marker line
 * followed by raw planar YUV. Supported colorspaces: C420 (any siting
 * variant), C422, C444 and Cmono. Conversion to RGB uses BT.601 limited
 * range, the convention of virtually every y4m producer.
 */

export interface Y4mVideo {
  width: number
  height: number
  fpsNum: number
  fpsDen: number
  colorspace: string
  frames: Uint8Array[]
}

export class VideoDecodeError extends Error {}

function planeSizes(colorspace: string, w: number, h: number): [number, number] {
  if (colorspace.startsWith('C420')) return [w * h, (w >> 1) * (h >> 1)]
  if (colorspace.startsWith('C422')) return [w * h, (w >> 1) * h]
  if (colorspace.startsWith('C444')) return [w * h, w * h]
  if (colorspace.startsWith('Cmono')) return [w * h, 0]
  throw new VideoDecodeError(`unsupported y4m colorspace ${colorspace}`)
}

export function parseY4m(buf: Buffer): Y4mVideo {
  const headerEnd = buf.indexOf(0x0a)
  if (headerEnd < 0) throw new VideoDecodeError('missing y4m header line')
  const header = buf.subarray(0, headerEnd).toString('ascii')
  if (!header.startsWith('YUV4MPEG2')) {
    throw new VideoDecodeError('not a YUV4MPEG2 stream')
  }
  let width = 0
  let height = 0
  let fpsNum = 25
  let fpsDen = 1
  let colorspace = 'C420'
  for (const param of header.split(' ').slice(1)) {
    if (!param) continue
    const tag = param[0]
    const value = param.slice(1)
    if (tag === 'W') width = parseInt(value, 10)
    else if (tag === 'H') height = parseInt(value, 10)
    else if (tag === 'F') {
      const [n, d] = value.split(':')
      fpsNum = parseInt(n, 10)
      fpsDen = parseInt(d, 10)
    } else if (tag === 'C') colorspace = param
  }
  if (!(width > 0) || !(height > 0)) {
    throw new VideoDecodeError(`bad y4m dimensions ${width}x${height}`)
  }
  if (!(fpsNum > 0) || !(fpsDen > 0)) {
    throw new VideoDecodeError('bad y4m frame rate')
  }
  if (width % 2 || height % 2) {
    if (colorspace.startsWith('C420') || colorspace.startsWith('C422')) {
      throw new VideoDecodeError('odd dimensions need C444 or Cmono')
    }
  }
  const [ySize, cSize] = planeSizes(colorspace, width, height)
  const frameBytes = ySize + 2 * cSize

  const frames: Uint8Array[] = []
  let pos = headerEnd + 1
  while (pos < buf.length) {
    const lineEnd = buf.indexOf(0x0a, pos)
    if (lineEnd < 0) throw new VideoDecodeError(`truncated FRAME marker at byte ${pos}`)
    const marker = buf.subarray(pos, lineEnd).toString('ascii')
    if (!marker.startsWith('FRAME')) {
      throw new VideoDecodeError(`expected FRAME marker at byte ${pos}, got ${JSON.stringify(marker)}`)
    }
    const start = lineEnd + 1
    if (start + frameBytes > buf.length) {
      throw new VideoDecodeError(`truncated frame data at byte ${start}`)
    }
    frames.push(new Uint8Array(buf.subarray(start, start + frameBytes)))
    pos = start + frameBytes
  }
  if (frames.length === 0) throw new VideoDecodeError('y4m stream has no frames')
  return { width, height, fpsNum, fpsDen, colorspace, frames }
}

export function durationSeconds(video: Y4mVideo): number {
  return (video.frames.length * video.fpsDen) / video.fpsNum
}

function clamp255(x: number): number {
  return x < 0 ? 0 : x > 255 ? 255 : x
}

/** Frame as interleaved RGB in [0, 1], shape height x width x 3. */
export function frameToRgb(video: Y4mVideo, index: number): Float32Array {
  if (index < 0 || index >= video.frames.length) {
    throw new VideoDecodeError(`frame index ${index} out of range`)
  }
  const { width: w, height: h, colorspace } = video
  const data = video.frames[index]
  const [ySize, cSize] = planeSizes(colorspace, w, h)
  const out = new Float32Array(w * h * 3)
  const mono = cSize === 0
  const half420 = colorspace.startsWith('C420')
  const half422 = colorspace.startsWith('C422')
  const cw = half420 || half422 ? w >> 1 : w
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < w; x++) {
      const yv = data[y * w + x]
      let u = 128
      let v = 128
      if (!mono) {
        const cx = half420 || half422 ? x >> 1 : x
        const cy = half420 ? y >> 1 : y
        u = data[ySize + cy * cw + cx]
        v = data[ySize + cSize + cy * cw + cx]
      }
      const c = 1.164 * (yv - 16)
      const d = u - 128
      const e = v - 128
      const o = (y * w + x) * 3
      out[o] = clamp255(c + 1.596 * e) / 255
      out[o + 1] = clamp255(c - 0.392 * d - 0.813 * e) / 255
      out[o + 2] = clamp255(c + 2.017 * d) / 255
    }
  }
  return out
}
