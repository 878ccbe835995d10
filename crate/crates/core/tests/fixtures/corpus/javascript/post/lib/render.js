const express = require('express');
const escape = require('escape-html');

function renderGreeting(name) {
  return '<h1>Hello ' + escape(name) + '</h1>';
}

const handler = (req, res) => {
  res.send(renderGreeting(String(req.query.name || '')));
};

module.exports = { renderGreeting, handler };
