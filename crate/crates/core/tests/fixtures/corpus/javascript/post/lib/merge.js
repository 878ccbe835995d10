function merge(target, source) {
  for (const key of Object.keys(source)) {
    if (key === '__proto__' || key === 'constructor') {
      continue;
    }
    if (typeof source[key] === 'object') {
      target[key] = merge(target[key] || {}, source[key]);
    } else {
      target[key] = source[key];
    }
  }
  return target;
}

class Store {
  constructor() {
    this.data = Object.create(null);
  }

  update(patch) {
    merge(this.data, patch);
  }
}

module.exports = { merge, Store };
